// Copyright 2026 The carimirror Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

namespace carimirror {

/// Dinic max-flow on a graph with an implicit source and sink.
/// Capacities may be +infinity as long as no infinite s-t path exists.
class MaxFlow
{
public:
    explicit MaxFlow(int nodeCount);

    int node_count() const { return static_cast<int>(m_head.size()); }

    /// Directed edge a -> b with forward capacity `cap` and reverse capacity `revCap`.
    void add_edge(int a, int b, double cap, double revCap = 0.0);
    /// Terminal links: source -> node with capS, node -> sink with capT.
    void add_terminal(int node, double capS, double capT);

    /// Returns the max-flow value, equal to the minimum s-t cut.
    double solve();

    /// After solve(): true if the node is reachable from the source in the residual graph.
    bool source_side(int node) const;

private:
    struct Edge
    {
        int to;
        int next;
        double cap;
    };

    bool build_levels();
    double augment_blocking();
    void link(int a, int b, double cap, double revCap);

    int m_source;
    int m_sink;
    std::vector<int> m_head;
    std::vector<Edge> m_edges;
    std::vector<int> m_level;
    std::vector<int> m_cursor;
    double m_offset = 0.0;
    bool m_solved = false;
};

} // namespace carimirror

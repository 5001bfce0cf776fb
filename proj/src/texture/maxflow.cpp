// Copyright 2026 The carimirror Authors.
// SPDX-License-Identifier: Apache-2.0

#include <carimirror/error.hpp>
#include <carimirror/texture/maxflow.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>

namespace carimirror {

namespace {

constexpr double kFlowEps = 1e-12;

} // namespace

MaxFlow::MaxFlow(int nodeCount)
{
    if (nodeCount < 0) throw InvalidInput("MaxFlow: negative node count");
    m_source = nodeCount;
    m_sink = nodeCount + 1;
    m_head.assign(static_cast<size_t>(nodeCount) + 2, -1);
}

void MaxFlow::link(int a, int b, double cap, double revCap)
{
    m_edges.push_back({b, m_head[static_cast<size_t>(a)], cap});
    m_head[static_cast<size_t>(a)] = static_cast<int>(m_edges.size()) - 1;
    m_edges.push_back({a, m_head[static_cast<size_t>(b)], revCap});
    m_head[static_cast<size_t>(b)] = static_cast<int>(m_edges.size()) - 1;
}

void MaxFlow::add_edge(int a, int b, double cap, double revCap)
{
    if (a < 0 || b < 0 || a >= m_source || b >= m_source) throw InvalidInput("MaxFlow: node out of range");
    if (cap < 0.0 || revCap < 0.0 || std::isnan(cap) || std::isnan(revCap)) throw InvalidInput("MaxFlow: negative capacity");
    link(a, b, cap, revCap);
}

void MaxFlow::add_terminal(int node, double capS, double capT)
{
    if (node < 0 || node >= m_source) throw InvalidInput("MaxFlow: node out of range");
    if (capS < 0.0 || capT < 0.0 || std::isnan(capS) || std::isnan(capT)) throw InvalidInput("MaxFlow: negative capacity");
    // Flow through s -> node -> t is forced; cancel it upfront so only the difference remains.
    const double common = std::min(capS, capT);
    if (std::isfinite(common) && common > 0.0) {
        capS -= common;
        capT -= common;
        m_offset += common;
    }
    if (capS > 0.0) link(m_source, node, capS, 0.0);
    if (capT > 0.0) link(node, m_sink, capT, 0.0);
}

bool MaxFlow::build_levels()
{
    m_level.assign(m_head.size(), -1);
    std::queue<int> queue;
    m_level[static_cast<size_t>(m_source)] = 0;
    queue.push(m_source);
    while (!queue.empty()) {
        const int v = queue.front();
        queue.pop();
        for (int e = m_head[static_cast<size_t>(v)]; e >= 0; e = m_edges[static_cast<size_t>(e)].next) {
            const Edge& edge = m_edges[static_cast<size_t>(e)];
            if (edge.cap > kFlowEps && m_level[static_cast<size_t>(edge.to)] < 0) {
                m_level[static_cast<size_t>(edge.to)] = m_level[static_cast<size_t>(v)] + 1;
                queue.push(edge.to);
            }
        }
    }
    return m_level[static_cast<size_t>(m_sink)] >= 0;
}

double MaxFlow::augment_blocking()
{
    // Iterative DFS over the level graph; grids make recursion depth unbounded.
    double total = 0.0;
    std::vector<int> path;
    int v = m_source;
    while (true) {
        if (v == m_sink) {
            double f = std::numeric_limits<double>::infinity();
            for (int e : path) f = std::min(f, m_edges[static_cast<size_t>(e)].cap);
            if (!std::isfinite(f)) throw SolverError("MaxFlow: infinite source-sink path");
            for (int e : path) {
                m_edges[static_cast<size_t>(e)].cap -= f;
                m_edges[static_cast<size_t>(e ^ 1)].cap += f;
            }
            total += f;
            path.clear();
            v = m_source;
            continue;
        }
        int& e = m_cursor[static_cast<size_t>(v)];
        while (e >= 0) {
            const Edge& edge = m_edges[static_cast<size_t>(e)];
            if (edge.cap > kFlowEps && m_level[static_cast<size_t>(edge.to)] == m_level[static_cast<size_t>(v)] + 1) break;
            e = edge.next;
        }
        if (e >= 0) {
            path.push_back(e);
            v = m_edges[static_cast<size_t>(e)].to;
            continue;
        }
        if (v == m_source) break;
        m_level[static_cast<size_t>(v)] = -1;
        const int back = path.back();
        path.pop_back();
        v = m_edges[static_cast<size_t>(back ^ 1)].to;
        int& parentCursor = m_cursor[static_cast<size_t>(v)];
        parentCursor = m_edges[static_cast<size_t>(parentCursor)].next;
    }
    return total;
}

double MaxFlow::solve()
{
    double total = m_offset;
    while (build_levels()) {
        m_cursor = m_head;
        total += augment_blocking();
    }
    build_levels();
    m_solved = true;
    return total;
}

bool MaxFlow::source_side(int node) const
{
    if (!m_solved) throw InvalidInput("MaxFlow: solve() not called");
    return m_level[static_cast<size_t>(node)] >= 0;
}

} // namespace carimirror

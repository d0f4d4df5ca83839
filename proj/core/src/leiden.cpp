#include <algorithm>
#include <deque>
#include <functional>
#include <map>
#include <random>

#include "epistwin/community.hpp"
#include "epistwin/util.hpp"

// Community detection in three phases: local moving (greedy reassignment,
// completed by an exact search when the level graph is tiny), seeded
// probabilistic refinement inside each community, and aggregation of the
// refined clusters into a coarser graph, iterated until nothing improves.
// Everything is deterministic for a fixed seed, and ties always fall to the
// lowest community slot.

namespace epistwin {

namespace {

constexpr double kGainEpsilon = 1e-12;

// Level graphs at or below this size get a complete assignment search in
// place of pure greedy moving. Greedy reassignment cannot take a downhill
// step, so it can park in basins that need a two-move escape; below the
// limit the partition space is small enough (Bell(10) = 115975) to walk
// outright.
constexpr std::size_t kExactSearchLimit = 10;

// Working graph for one aggregation level. Unlike the projection it may
// carry self-loops: the internal weight of a collapsed cluster.
struct WorkGraph {
    std::size_t n = 0;
    std::vector<std::vector<std::pair<std::size_t, double>>> adj;
    std::vector<double> self_loop;
    std::vector<double> degree;  // includes both ends of the self-loop
    double m = 0.0;
};

WorkGraph level_zero(const UndirectedProjection& p) {
    WorkGraph g;
    g.n = p.vertex_count();
    g.adj = p.adjacency;
    g.self_loop.assign(g.n, 0.0);
    g.degree = p.degree;
    g.m = p.total_weight;
    return g;
}

std::vector<std::size_t> shuffled_order(std::size_t n, std::mt19937_64& rng) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    for (std::size_t i = n; i > 1; --i)
        std::swap(order[i - 1], order[rng() % i]);
    return order;
}

double uniform_unit(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// One pass of greedy reassignment with a work queue; returns whether any
// vertex changed community.
bool move_nodes(const WorkGraph& g, double gamma, std::vector<std::size_t>& comm,
                std::mt19937_64& rng) {
    std::vector<double> community_degree(g.n, 0.0);
    std::vector<std::size_t> community_size(g.n, 0);
    for (std::size_t v = 0; v < g.n; ++v) {
        community_degree[comm[v]] += g.degree[v];
        community_size[comm[v]] += 1;
    }

    std::deque<std::size_t> queue;
    std::vector<char> queued(g.n, 1);
    for (std::size_t v : shuffled_order(g.n, rng)) queue.push_back(v);

    const double m = g.m;
    bool moved_any = false;
    while (!queue.empty()) {
        std::size_t v = queue.front();
        queue.pop_front();
        queued[v] = 0;

        std::size_t a = comm[v];
        std::map<std::size_t, double> weight_to;  // community -> w(v -> c)
        for (const auto& [u, w] : g.adj[v]) weight_to[comm[u]] += w;
        double w_va = 0.0;
        if (auto it = weight_to.find(a); it != weight_to.end()) w_va = it->second;
        const double k_v = g.degree[v];
        const double residual_a = community_degree[a] - k_v;

        auto gain_to = [&](double w_vb, double degree_b) {
            return (w_vb - w_va) / m -
                   gamma * k_v * (degree_b - residual_a) / (2.0 * m * m);
        };

        double best_gain = 0.0;
        std::size_t best = a;
        for (const auto& [b, w_vb] : weight_to) {
            if (b == a) continue;
            double gain = gain_to(w_vb, community_degree[b]);
            if (gain > best_gain + kGainEpsilon) {
                best_gain = gain;
                best = b;
            }
        }
        if (community_size[a] > 1) {
            // leaving for a fresh empty community is also a candidate
            std::size_t fresh = g.n;
            for (std::size_t c = 0; c < g.n; ++c)
                if (community_size[c] == 0) {
                    fresh = c;
                    break;
                }
            if (fresh != g.n) {
                double gain = gain_to(0.0, 0.0);
                if (gain > best_gain + kGainEpsilon) {
                    best_gain = gain;
                    best = fresh;
                }
            }
        }
        if (best == a) continue;

        community_degree[a] -= k_v;
        community_size[a] -= 1;
        community_degree[best] += k_v;
        community_size[best] += 1;
        comm[v] = best;
        moved_any = true;
        for (const auto& [u, w] : g.adj[v]) {
            (void)w;
            if (comm[u] != best && !queued[u]) {
                queued[u] = 1;
                queue.push_back(u);
            }
        }
    }
    return moved_any;
}

// Modularity of a level-graph assignment; self-loops count as internal
// weight and are already doubled into the degree.
double level_quality(const WorkGraph& g, const std::vector<std::size_t>& comm,
                     double gamma) {
    std::vector<double> internal(g.n, 0.0), degree(g.n, 0.0);
    for (std::size_t v = 0; v < g.n; ++v) {
        internal[comm[v]] += g.self_loop[v];
        degree[comm[v]] += g.degree[v];
        for (const auto& [u, w] : g.adj[v])
            if (u > v && comm[u] == comm[v]) internal[comm[v]] += w;
    }
    double q = 0.0;
    for (std::size_t c = 0; c < g.n; ++c) {
        double share = degree[c] / (2.0 * g.m);
        q += internal[c] / g.m - gamma * share * share;
    }
    return q;
}

// Walks every partition of a tiny level graph as restricted growth strings,
// keeping the first assignment that reaches the best quality.
std::vector<std::size_t> best_assignment_exact(const WorkGraph& g, double gamma) {
    std::vector<std::size_t> assign(g.n, 0), best_assign(g.n, 0);
    std::vector<double> internal(g.n, 0.0), degree(g.n, 0.0);
    double best = -2.0;
    const double m = g.m;

    std::function<void(std::size_t, std::size_t)> walk = [&](std::size_t v,
                                                             std::size_t used) {
        if (v == g.n) {
            double q = 0.0;
            for (std::size_t c = 0; c < used; ++c) {
                double share = degree[c] / (2.0 * m);
                q += internal[c] / m - gamma * share * share;
            }
            if (q > best + kGainEpsilon) {
                best = q;
                best_assign = assign;
            }
            return;
        }
        for (std::size_t c = 0; c <= used; ++c) {
            double added = g.self_loop[v];
            for (const auto& [u, w] : g.adj[v])
                if (u < v && assign[u] == c) added += w;
            assign[v] = c;
            internal[c] += added;
            degree[c] += g.degree[v];
            walk(v + 1, std::max(used, c + 1));
            internal[c] -= added;
            degree[c] -= g.degree[v];
        }
    };
    walk(0, 0);
    return best_assign;
}

// Splits each community into connected, well-scoring subsets. Singleton
// vertices merge into an adjacent subset of the same community with
// probability proportional to the quality gain.
std::vector<std::size_t> refine(const WorkGraph& g, double gamma,
                                const std::vector<std::size_t>& comm,
                                std::mt19937_64& rng) {
    std::vector<std::size_t> refined(g.n);
    std::vector<double> refined_degree(g.n);
    std::vector<std::size_t> refined_size(g.n, 1);
    for (std::size_t v = 0; v < g.n; ++v) {
        refined[v] = v;
        refined_degree[v] = g.degree[v];
    }

    const double m = g.m;
    for (std::size_t v : shuffled_order(g.n, rng)) {
        if (refined_size[refined[v]] != 1) continue;
        std::map<std::size_t, double> weight_to;
        for (const auto& [u, w] : g.adj[v])
            if (comm[u] == comm[v] && refined[u] != refined[v])
                weight_to[refined[u]] += w;

        const double k_v = g.degree[v];
        std::vector<std::pair<std::size_t, double>> candidates;
        double total_gain = 0.0;
        for (const auto& [d, w_vd] : weight_to) {
            double gain =
                w_vd / m - gamma * k_v * refined_degree[d] / (2.0 * m * m);
            if (gain > kGainEpsilon) {
                candidates.emplace_back(d, gain);
                total_gain += gain;
            }
        }
        if (candidates.empty()) continue;

        double pick = uniform_unit(rng) * total_gain;
        std::size_t chosen = candidates.back().first;
        for (const auto& [d, gain] : candidates) {
            if (pick < gain) {
                chosen = d;
                break;
            }
            pick -= gain;
        }
        refined_size[refined[v]] -= 1;
        refined[v] = chosen;
        refined_size[chosen] += 1;
        refined_degree[chosen] += k_v;
    }
    return refined;
}

// Collapses refined clusters into single vertices, numbering the new
// vertices by their lowest old member so levels stay deterministic.
WorkGraph aggregate(const WorkGraph& g, const std::vector<std::size_t>& refined,
                    std::vector<std::size_t>& old_to_new) {
    std::map<std::size_t, std::size_t> slot_to_new;
    old_to_new.assign(g.n, 0);
    for (std::size_t v = 0; v < g.n; ++v) {
        auto [it, fresh] = slot_to_new.try_emplace(refined[v], slot_to_new.size());
        (void)fresh;
        old_to_new[v] = it->second;
    }

    WorkGraph next;
    next.n = slot_to_new.size();
    next.adj.assign(next.n, {});
    next.self_loop.assign(next.n, 0.0);
    next.degree.assign(next.n, 0.0);
    next.m = g.m;

    std::map<std::pair<std::size_t, std::size_t>, double> edges;
    for (std::size_t v = 0; v < g.n; ++v) {
        next.self_loop[old_to_new[v]] += g.self_loop[v];
        for (const auto& [u, w] : g.adj[v]) {
            if (u < v) continue;
            std::size_t a = old_to_new[v], b = old_to_new[u];
            if (a == b)
                next.self_loop[a] += w;
            else
                edges[std::minmax(a, b)] += w;
        }
    }
    for (const auto& [pair, w] : edges) {
        next.adj[pair.first].emplace_back(pair.second, w);
        next.adj[pair.second].emplace_back(pair.first, w);
        next.degree[pair.first] += w;
        next.degree[pair.second] += w;
    }
    for (std::size_t v = 0; v < next.n; ++v)
        next.degree[v] += 2.0 * next.self_loop[v];
    return next;
}

Partition partition_from_assignment(const UndirectedProjection& p,
                                    const std::vector<std::size_t>& flat,
                                    double resolution) {
    std::map<std::size_t, std::vector<std::size_t>> groups;
    for (std::size_t v = 0; v < flat.size(); ++v) groups[flat[v]].push_back(v);

    std::vector<std::vector<std::size_t>> clusters;
    for (auto& [slot, members] : groups) {
        std::sort(members.begin(), members.end());
        clusters.push_back(std::move(members));
    }
    std::sort(clusters.begin(), clusters.end(),
              [](const auto& a, const auto& b) { return a.front() < b.front(); });

    Partition part;
    part.vertex_ids = p.vertex_ids;
    part.content_epoch = p.content_epoch;
    part.clusters = std::move(clusters);
    part.assignment.assign(flat.size(), 0);
    for (std::size_t c = 0; c < part.clusters.size(); ++c)
        for (std::size_t v : part.clusters[c]) part.assignment[v] = c;
    part.quality = modularity(p, part, resolution);
    return part;
}

// Any cluster that fails an intra-cluster reachability walk is split into
// its connected components; splitting never lowers modularity.
std::vector<std::size_t> split_disconnected(const UndirectedProjection& p,
                                            const std::vector<std::size_t>& flat) {
    std::vector<std::size_t> out(flat.size());
    std::vector<char> seen(flat.size(), 0);
    std::size_t next_slot = 0;
    for (std::size_t start = 0; start < flat.size(); ++start) {
        if (seen[start]) continue;
        std::size_t slot = next_slot++;
        std::deque<std::size_t> frontier{start};
        seen[start] = 1;
        while (!frontier.empty()) {
            std::size_t v = frontier.front();
            frontier.pop_front();
            out[v] = slot;
            for (const auto& [u, w] : p.adjacency[v]) {
                (void)w;
                if (!seen[u] && flat[u] == flat[start]) {
                    seen[u] = 1;
                    frontier.push_back(u);
                }
            }
        }
    }
    return out;
}

std::vector<std::size_t> run_once(const UndirectedProjection& p, double gamma,
                                  std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    WorkGraph g = level_zero(p);

    std::vector<std::size_t> orig_to_work(p.vertex_count());
    for (std::size_t v = 0; v < p.vertex_count(); ++v) orig_to_work[v] = v;
    std::vector<std::size_t> comm(g.n);
    for (std::size_t v = 0; v < g.n; ++v) comm[v] = v;

    double previous_quality = -2.0;
    for (int round = 0; round < 100; ++round) {
        bool moved = move_nodes(g, gamma, comm, rng);
        if (g.n <= kExactSearchLimit) {
            std::vector<std::size_t> exact = best_assignment_exact(g, gamma);
            if (level_quality(g, exact, gamma) >
                level_quality(g, comm, gamma) + kGainEpsilon) {
                comm = std::move(exact);
                moved = true;
            }
        }

        std::vector<std::size_t> flat(p.vertex_count());
        for (std::size_t v = 0; v < p.vertex_count(); ++v)
            flat[v] = comm[orig_to_work[v]];
        double quality = partition_from_assignment(p, flat, gamma).quality;
        if (quality + 1e-9 < previous_quality)
            raise(ErrorKind::InvariantViolation,
                  "community quality regressed between rounds");
        previous_quality = quality;

        std::size_t distinct = 0;
        {
            std::vector<char> used(g.n, 0);
            for (std::size_t v = 0; v < g.n; ++v)
                if (!used[comm[v]]) {
                    used[comm[v]] = 1;
                    ++distinct;
                }
        }
        if (distinct == g.n) break;  // every community is a single vertex

        std::vector<std::size_t> refined = refine(g, gamma, comm, rng);
        std::vector<std::size_t> old_to_new;
        WorkGraph next = aggregate(g, refined, old_to_new);
        if (next.n == g.n && !moved) break;

        std::vector<std::size_t> next_comm(next.n);
        for (std::size_t v = 0; v < g.n; ++v) next_comm[old_to_new[v]] = comm[v];
        // compress community slots into the new index space
        {
            std::map<std::size_t, std::size_t> remap;
            for (std::size_t v = 0; v < next.n; ++v) {
                auto [it, fresh] = remap.try_emplace(next_comm[v], remap.size());
                (void)fresh;
                next_comm[v] = it->second;
            }
        }
        for (std::size_t v = 0; v < p.vertex_count(); ++v)
            orig_to_work[v] = old_to_new[orig_to_work[v]];
        g = std::move(next);
        comm = std::move(next_comm);
    }

    std::vector<std::size_t> flat(p.vertex_count());
    for (std::size_t v = 0; v < p.vertex_count(); ++v)
        flat[v] = comm[orig_to_work[v]];
    return split_disconnected(p, flat);
}

}  // namespace

Partition leiden(const UndirectedProjection& projection, std::uint64_t seed,
                 double resolution, std::size_t restarts) {
    if (projection.vertex_count() == 0 || projection.total_weight <= 0.0)
        raise(ErrorKind::EmptyGraph, "community detection needs at least one edge");
    if (resolution <= 0.0)
        raise(ErrorKind::Usage, "resolution must be positive");
    if (restarts == 0) restarts = 1;

    Partition best;
    bool have_best = false;
    for (std::size_t r = 0; r < restarts; ++r) {
        std::uint64_t restart_seed = derive_seed(seed, "restart" + std::to_string(r));
        std::vector<std::size_t> flat = run_once(projection, resolution, restart_seed);
        Partition candidate = partition_from_assignment(projection, flat, resolution);
        if (!have_best || candidate.quality > best.quality + kGainEpsilon) {
            best = std::move(candidate);
            have_best = true;
        }
    }

    double floor = singleton_partition(projection).quality;
    if (best.quality + 1e-9 < floor)
        raise(ErrorKind::InvariantViolation,
              "detected communities score below the singleton baseline");
    return best;
}

}  // namespace epistwin

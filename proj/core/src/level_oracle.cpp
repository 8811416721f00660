#include "cfb/level_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_map>

#include "cfb/errors.hpp"
#include "cfb/rng.hpp"

namespace cfb {

double LevelSetPolyline::total_length() const {
    double len = 0.0;
    for (const auto& comp : components) {
        for (std::size_t k = 1; k < comp.size(); ++k) len += norm2(comp[k] - comp[k - 1]);
    }
    return len;
}

std::size_t LevelSetPolyline::vertex_count() const {
    std::size_t n = 0;
    for (const auto& comp : components) n += comp.size();
    return n;
}

LevelGrid::LevelGrid(const Scm2D& scm, Arm arm, int resolution)
    : scm_(&scm), arm_(arm), res_(resolution) {
    if (resolution < 2) throw DomainError("grid resolution must be at least 2");
    values_.resize(static_cast<std::size_t>(res_ + 1) * (res_ + 1));
    for (int i = 0; i <= res_; ++i) {
        double x = coord(i);
        for (int j = 0; j <= res_; ++j) {
            values_[idx(i, j)] = scm.f(arm_, {x, coord(j)});
        }
    }
}

namespace {

// bisection along a grid edge until the residual meets the refinement
// tolerance or the bracket is exhausted; pa is on the >= side
Vec2 refine_crossing(const Scm2D& scm, Arm a, double level, Vec2 pa, Vec2 pb,
                     double tol) {
    for (int it = 0; it < 128; ++it) {
        Vec2 mid = 0.5 * (pa + pb);
        double fm = scm.f(a, mid);
        if (std::fabs(fm - level) <= tol) return mid;
        if (fm >= level) {
            pa = mid;
        } else {
            pb = mid;
        }
        if (std::fabs(pa.x - pb.x) + std::fabs(pa.y - pb.y) == 0.0) break;
    }
    return 0.5 * (pa + pb);
}

struct SegmentSoup {
    std::vector<Vec2> vertices;
    std::vector<std::pair<int, int>> segments;
};

// edge keys: even ids for edges along u1, odd for edges along u2
std::uint64_t hkey(int i, int j, int res) {
    return (static_cast<std::uint64_t>(i) * (res + 1) + j) * 2;
}
std::uint64_t vkey(int i, int j, int res) {
    return (static_cast<std::uint64_t>(i) * (res + 1) + j) * 2 + 1;
}

SegmentSoup march_cells(const LevelGrid& grid, double level, const OracleConfig& cfg) {
    const int res = grid.resolution();
    const Scm2D& scm = grid.scm();
    const Arm arm = grid.arm();

    SegmentSoup soup;
    std::unordered_map<std::uint64_t, int> edge_vertex;
    edge_vertex.reserve(4096);

    auto vertex_on = [&](std::uint64_t key, int i0, int j0, int i1, int j1) {
        auto it = edge_vertex.find(key);
        if (it != edge_vertex.end()) return it->second;
        Vec2 pa{grid.coord(i0), grid.coord(j0)};
        Vec2 pb{grid.coord(i1), grid.coord(j1)};
        bool a_in = grid.node(i0, j0) >= level;
        Vec2 p = a_in ? refine_crossing(scm, arm, level, pa, pb, cfg.refine_tol)
                      : refine_crossing(scm, arm, level, pb, pa, cfg.refine_tol);
        int id = static_cast<int>(soup.vertices.size());
        soup.vertices.push_back(p);
        edge_vertex.emplace(key, id);
        return id;
    };

    enum EdgeSlot { kBottom = 0, kRight = 1, kTop = 2, kLeft = 3 };

    for (int i = 0; i < res; ++i) {
        for (int j = 0; j < res; ++j) {
            bool b00 = grid.node(i, j) >= level;
            bool b10 = grid.node(i + 1, j) >= level;
            bool b11 = grid.node(i + 1, j + 1) >= level;
            bool b01 = grid.node(i, j + 1) >= level;
            int c = (b00 ? 1 : 0) | (b10 ? 2 : 0) | (b11 ? 4 : 0) | (b01 ? 8 : 0);
            if (c == 0 || c == 15) continue;

            auto edge_vertex_id = [&](EdgeSlot e) {
                switch (e) {
                    case kBottom: return vertex_on(hkey(i, j, res), i, j, i + 1, j);
                    case kTop: return vertex_on(hkey(i, j + 1, res), i, j + 1, i + 1, j + 1);
                    case kLeft: return vertex_on(vkey(i, j, res), i, j, i, j + 1);
                    default: return vertex_on(vkey(i + 1, j, res), i + 1, j, i + 1, j + 1);
                }
            };
            auto emit = [&](EdgeSlot ea, EdgeSlot eb) {
                soup.segments.emplace_back(edge_vertex_id(ea), edge_vertex_id(eb));
            };

            switch (c) {
                case 1: emit(kLeft, kBottom); break;
                case 2: emit(kBottom, kRight); break;
                case 3: emit(kLeft, kRight); break;
                case 4: emit(kTop, kRight); break;
                case 6: emit(kBottom, kTop); break;
                case 7: emit(kLeft, kTop); break;
                case 8: emit(kLeft, kTop); break;
                case 9: emit(kBottom, kTop); break;
                case 11: emit(kTop, kRight); break;
                case 12: emit(kLeft, kRight); break;
                case 13: emit(kBottom, kRight); break;
                case 14: emit(kLeft, kBottom); break;
                case 5:
                case 10: {
                    // saddle cell: connect according to the sign at the center
                    Vec2 center{0.5 * (grid.coord(i) + grid.coord(i + 1)),
                                0.5 * (grid.coord(j) + grid.coord(j + 1))};
                    bool center_in = scm.f(arm, center) >= level;
                    bool pair_along_00 = (c == 5) ? !center_in : center_in;
                    if (pair_along_00) {
                        emit(kLeft, kBottom);
                        emit(kTop, kRight);
                    } else {
                        emit(kLeft, kTop);
                        emit(kBottom, kRight);
                    }
                    break;
                }
                default: break;
            }
        }
    }
    return soup;
}

std::vector<std::vector<Vec2>> chain_segments(const SegmentSoup& soup) {
    const int nv = static_cast<int>(soup.vertices.size());
    std::vector<std::array<int, 2>> adj(nv, {-1, -1});
    auto attach = [&](int v, int seg) {
        if (adj[v][0] < 0) {
            adj[v][0] = seg;
        } else if (adj[v][1] < 0) {
            adj[v][1] = seg;
        }
        // a third incidence cannot occur: each vertex lies on one grid edge,
        // shared by at most two cells contributing one segment each
    };
    for (std::size_t s = 0; s < soup.segments.size(); ++s) {
        attach(soup.segments[s].first, static_cast<int>(s));
        attach(soup.segments[s].second, static_cast<int>(s));
    }

    std::vector<bool> used(soup.segments.size(), false);
    std::vector<std::vector<Vec2>> chains;

    auto walk = [&](int start_vertex, int start_seg) {
        std::vector<Vec2> path;
        path.push_back(soup.vertices[start_vertex]);
        int v = start_vertex;
        int s = start_seg;
        while (s >= 0 && !used[s]) {
            used[s] = true;
            int w = soup.segments[s].first == v ? soup.segments[s].second
                                                : soup.segments[s].first;
            path.push_back(soup.vertices[w]);
            v = w;
            int next = adj[v][0] >= 0 && adj[v][0] != s ? adj[v][0] : adj[v][1];
            s = (next >= 0 && next != s) ? next : -1;
        }
        return path;
    };

    // open curves first (boundary-clipped components)
    for (int v = 0; v < nv; ++v) {
        if (adj[v][0] >= 0 && adj[v][1] < 0 && !used[adj[v][0]]) {
            chains.push_back(walk(v, adj[v][0]));
        }
    }
    // remaining segments belong to closed loops
    for (std::size_t s = 0; s < soup.segments.size(); ++s) {
        if (!used[s]) chains.push_back(walk(soup.segments[s].first, static_cast<int>(s)));
    }
    return chains;
}

double polyline_length(const std::vector<Vec2>& comp) {
    double len = 0.0;
    for (std::size_t k = 1; k < comp.size(); ++k) len += norm2(comp[k] - comp[k - 1]);
    return len;
}

// line integral of weight(mid) * f_num(mid) along the polyline, one midpoint
// gradient per segment
template <class FNum>
double level_integral(const Scm2D& scm, Arm grad_arm, const LevelSetPolyline& poly,
                      const OracleConfig& cfg, FNum&& numerator) {
    double acc = 0.0;
    for (const auto& comp : poly.components) {
        for (std::size_t k = 1; k < comp.size(); ++k) {
            Vec2 a = comp[k - 1];
            Vec2 b = comp[k];
            double len = norm2(b - a);
            if (len == 0.0) continue;
            Vec2 mid = 0.5 * (a + b);
            double gn = norm2(grad_f(scm, grad_arm, mid, cfg.fd_step));
            // degenerate gradients carry zero or vanishing weight; boundary
            // blowups would otherwise poison the whole integral
            if (gn < 1e-300 || !std::isfinite(gn)) continue;
            double term = len * numerator(mid) / gn;
            if (std::isfinite(term)) acc += term;
        }
    }
    return acc;
}

void require_in_support(const Scm2D& scm, Arm a, double y, const char* who) {
    if (!scm.support_of(a).contains_open(y)) {
        throw DomainError(std::string(who) + ": level " + std::to_string(y) +
                          " outside the open support of arm " +
                          std::to_string(arm_index(a)) + " for " + scm.name);
    }
}

}  // namespace

LevelSetPolyline trace_level_set(const LevelGrid& grid, double level,
                                 const OracleConfig& cfg) {
    SegmentSoup soup = march_cells(grid, level, cfg);
    if (soup.segments.empty()) {
        throw EmptyLevelSetError("no level-set crossing found for " + grid.scm().name +
                                 " arm " + std::to_string(arm_index(grid.arm())) +
                                 " at level " + std::to_string(level));
    }
    LevelSetPolyline poly;
    poly.arm = grid.arm();
    poly.level = level;
    for (auto& comp : chain_segments(soup)) {
        if (polyline_length(comp) >= cfg.min_component_length) {
            poly.components.push_back(std::move(comp));
        }
    }
    if (poly.components.empty()) {
        throw EmptyLevelSetError("all level-set components shorter than the minimum for " +
                                 grid.scm().name + " at level " + std::to_string(level));
    }
    return poly;
}

LevelSetPolyline trace_level_set(const Scm2D& scm, Arm a, double level,
                                 const OracleConfig& cfg) {
    require_in_support(scm, a, level, "trace_level_set");
    LevelGrid grid(scm, a, cfg.grid_resolution);
    return trace_level_set(grid, level, cfg);
}

double observational_density(const LevelGrid& grid, double y, const OracleConfig& cfg) {
    LevelSetPolyline poly = trace_level_set(grid, y, cfg);
    return level_integral(grid.scm(), grid.arm(), poly, cfg, [](Vec2) { return 1.0; });
}

double observational_density(const Scm2D& scm, Arm a, double y, const OracleConfig& cfg) {
    require_in_support(scm, a, y, "observational_density");
    LevelGrid grid(scm, a, cfg.grid_resolution);
    return observational_density(grid, y, cfg);
}

std::vector<double> observational_density_curve(const Scm2D& scm, Arm a,
                                                const std::vector<double>& ys,
                                                const OracleConfig& cfg) {
    for (double y : ys) require_in_support(scm, a, y, "observational_density_curve");
    LevelGrid grid(scm, a, cfg.grid_resolution);
    std::vector<double> out;
    out.reserve(ys.size());
    for (double y : ys) out.push_back(observational_density(grid, y, cfg));
    return out;
}

double ecou_oracle(const Scm2D& scm, Arm a_prime, double y_prime, Arm a,
                   const OracleConfig& cfg) {
    if (a == a_prime) throw DomainError("ecou_oracle: factual and query arms must differ");
    require_in_support(scm, a_prime, y_prime, "ecou_oracle");
    LevelGrid grid(scm, a_prime, cfg.grid_resolution);
    LevelSetPolyline poly = trace_level_set(grid, y_prime, cfg);
    double den = level_integral(scm, a_prime, poly, cfg, [](Vec2) { return 1.0; });
    double num = level_integral(scm, a_prime, poly, cfg,
                                [&](Vec2 mid) { return scm.f(a, mid); });
    if (den <= 0.0) {
        throw NumericalError("ecou_oracle: vanishing evidence density at level " +
                             std::to_string(y_prime));
    }
    double q = num / den;
    const Interval& sup = scm.support_of(a);
    return std::clamp(q, sup.lo, sup.hi);
}

DensityCurve counterfactual_density(const Scm2D& scm, Arm a_prime, double y_prime,
                                    Arm a, const std::vector<double>& y_grid,
                                    const OracleConfig& cfg) {
    if (a == a_prime) throw DomainError("counterfactual_density: arms must differ");
    if (y_grid.size() < 3) throw DomainError("counterfactual_density: grid too small");
    require_in_support(scm, a_prime, y_prime, "counterfactual_density");

    LevelGrid grid(scm, a_prime, cfg.grid_resolution);
    LevelSetPolyline poly = trace_level_set(grid, y_prime, cfg);

    const std::size_t n = y_grid.size();
    std::vector<double> mass(n, 0.0);
    for (const auto& comp : poly.components) {
        for (std::size_t k = 1; k < comp.size(); ++k) {
            Vec2 pa = comp[k - 1];
            Vec2 pb = comp[k];
            double len = norm2(pb - pa);
            if (len == 0.0) continue;
            Vec2 mid = 0.5 * (pa + pb);
            double gn = norm2(grad_f(scm, a_prime, mid, cfg.fd_step));
            if (gn < 1e-300) continue;
            double m = len / gn;
            double v = scm.f(a, mid);
            // linear binning between the two neighboring grid nodes
            auto it = std::upper_bound(y_grid.begin(), y_grid.end(), v);
            if (it == y_grid.begin()) {
                mass[0] += m;
            } else if (it == y_grid.end()) {
                mass[n - 1] += m;
            } else {
                std::size_t hi = static_cast<std::size_t>(it - y_grid.begin());
                std::size_t lo = hi - 1;
                double t = (v - y_grid[lo]) / (y_grid[hi] - y_grid[lo]);
                mass[lo] += m * (1.0 - t);
                mass[hi] += m * t;
            }
        }
    }

    double total = 0.0;
    for (double m : mass) total += m;
    if (total <= 0.0) {
        throw NumericalError("counterfactual_density: no pushforward mass on the grid");
    }

    DensityCurve curve;
    curve.y = y_grid;
    curve.p.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        double w;
        if (i == 0) {
            w = 0.5 * (y_grid[1] - y_grid[0]);
        } else if (i == n - 1) {
            w = 0.5 * (y_grid[n - 1] - y_grid[n - 2]);
        } else {
            w = 0.5 * (y_grid[i + 1] - y_grid[i - 1]);
        }
        curve.p[i] = mass[i] / (w * total);
    }
    return curve;
}

DensityCurve counterfactual_density(const Scm2D& scm, Arm a_prime, double y_prime,
                                    Arm a, const OracleConfig& cfg) {
    const Interval& sup = scm.support_of(a);
    std::vector<double> grid(201);
    for (int i = 0; i < 201; ++i) {
        grid[static_cast<std::size_t>(i)] = sup.lo + (sup.hi - sup.lo) * i / 200.0;
    }
    return counterfactual_density(scm, a_prime, y_prime, a, grid, cfg);
}

double cdf_oracle(const Scm2D& scm, Arm a, double y, std::size_t n_mc,
                  std::uint64_t seed) {
    Rng rng(seed);
    std::size_t count = 0;
    for (std::size_t i = 0; i < n_mc; ++i) {
        Vec2 u{rng.uniform01(), rng.uniform01()};
        if (scm.f(a, u) <= y) ++count;
    }
    return static_cast<double>(count) / static_cast<double>(n_mc);
}

}  // namespace cfb

#include "cfb/autodiff.hpp"

#include <numeric>

namespace cfb::ad {

void flatten(const MlpParams& m, std::vector<double>& out) {
    out.insert(out.end(), m.w1.begin(), m.w1.end());
    out.insert(out.end(), m.b1.begin(), m.b1.end());
    out.insert(out.end(), m.w2.begin(), m.w2.end());
    out.insert(out.end(), m.b2.begin(), m.b2.end());
}

void unflatten(MlpParams& m, const double* data) {
    std::size_t p = 0;
    for (auto& w : m.w1) w = data[p++];
    for (auto& w : m.b1) w = data[p++];
    for (auto& w : m.w2) w = data[p++];
    for (auto& w : m.b2) w = data[p++];
}

MlpT<Var> lift_mlp(Tape& tape, const MlpParams& m, std::vector<Var>* leaves) {
    auto lift_one = [&](double v) {
        if (!leaves) return cvar(v);
        Var x = tape.leaf(v);
        leaves->push_back(x);
        return x;
    };
    MlpT<Var> out;
    out.in = m.in;
    out.hidden = m.hidden;
    out.out = m.out;
    out.w1.reserve(m.w1.size());
    out.b1.reserve(m.b1.size());
    out.w2.reserve(m.w2.size());
    out.b2.reserve(m.b2.size());
    for (double v : m.w1) out.w1.push_back(lift_one(v));
    for (double v : m.b1) out.b1.push_back(lift_one(v));
    for (double v : m.w2) out.w2.push_back(lift_one(v));
    for (double v : m.b2) out.b2.push_back(lift_one(v));
    return out;
}

std::vector<double> gradient_of(const std::function<Var(Tape&, std::span<const Var>)>& fn,
                                std::span<const double> params) {
    Tape tape;
    std::vector<Var> leaves;
    leaves.reserve(params.size());
    for (double p : params) leaves.push_back(tape.leaf(p));
    Var out = fn(tape, leaves);
    std::vector<double> adj = tape.gradient(out);
    std::vector<double> g(params.size(), 0.0);
    for (std::size_t i = 0; i < leaves.size(); ++i) g[i] = Tape::adjoint_of(adj, leaves[i]);
    return g;
}

double spectral_norm(const Mat& w, int iters, std::vector<double>* warm) {
    const int n = w.cols;
    const int m = w.rows;
    if (n == 0 || m == 0) return 0.0;

    std::vector<double> v;
    if (warm && static_cast<int>(warm->size()) == n) {
        v = *warm;
    } else {
        // fixed quasi-random start; components distinct so it is never
        // orthogonal to the leading singular vector of small matrices by
        // construction of the iteration below
        v.resize(n);
        double x = 0.7548776662466927;  // plastic-ratio sequence
        for (int j = 0; j < n; ++j) {
            v[j] = 0.5 + x;
            x = x * 0.7548776662466927 + 0.1;
        }
    }

    std::vector<double> wv(m), wtwv(n);
    double sigma = 0.0;
    for (int it = 0; it < iters; ++it) {
        // normalize v
        double nv = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
        if (nv == 0.0) {
            v.assign(n, 1.0 / std::sqrt(static_cast<double>(n)));
            nv = 1.0;
        } else {
            for (double& x : v) x /= nv;
        }
        for (int i = 0; i < m; ++i) {
            double acc = 0.0;
            for (int j = 0; j < n; ++j) acc += w(i, j) * v[j];
            wv[i] = acc;
        }
        sigma = std::sqrt(std::inner_product(wv.begin(), wv.end(), wv.begin(), 0.0));
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int i = 0; i < m; ++i) acc += w(i, j) * wv[i];
            wtwv[j] = acc;
        }
        v = wtwv;
    }
    if (warm) *warm = v;
    return sigma;
}

}  // namespace cfb::ad

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "cfb/errors.hpp"

namespace cfb::ad {

// ---------------------------------------------------------------------------
// Reverse-mode tape.
//
// Scalars participating in a differentiable computation are Var handles into a
// Tape. Constants carry idx = -1 and never touch the tape, so mixing doubles
// and Vars is free. Nodes store local partials as plain doubles; the backward
// pass is a single reverse sweep with adjoint accumulation.
// ---------------------------------------------------------------------------

class Tape;

struct Var {
    double v = 0.0;
    std::int32_t idx = -1;
    Tape* tape = nullptr;

    bool is_const() const { return idx < 0; }
};

class Tape {
  public:
    Tape() { heads_.push_back(0); }

    Var leaf(double value) {
        Var x{value, next_index(), this};
        close_node();
        return x;
    }

    Var node1(double value, const Var& a, double pa) {
        if (a.is_const()) return Var{value, -1, this};
        Var x{value, next_index(), this};
        push(a.idx, pa);
        close_node();
        return x;
    }

    Var node2(double value, const Var& a, double pa, const Var& b, double pb) {
        if (a.is_const() && b.is_const()) return Var{value, -1, this};
        Var x{value, next_index(), this};
        if (!a.is_const()) push(a.idx, pa);
        if (!b.is_const()) push(b.idx, pb);
        close_node();
        return x;
    }

    // n-ary node with precomputed local partials (used for implicit-function
    // nodes such as fixed-point block inversion)
    Var node_n(double value, std::span<const std::int32_t> parents,
               std::span<const double> partials) {
        Var x{value, next_index(), this};
        for (std::size_t i = 0; i < parents.size(); ++i) {
            if (parents[i] >= 0) push(parents[i], partials[i]);
        }
        close_node();
        return x;
    }

    std::int32_t size() const { return static_cast<std::int32_t>(heads_.size()) - 1; }

    // adjoints of every node w.r.t. the given output
    std::vector<double> gradient(const Var& output) const {
        std::vector<double> adj(size(), 0.0);
        if (output.is_const()) return adj;
        adj[output.idx] = 1.0;
        for (std::int32_t i = static_cast<std::int32_t>(adj.size()) - 1; i >= 0; --i) {
            double a = adj[i];
            if (a == 0.0) continue;
            for (std::uint32_t k = heads_[i]; k < heads_[i + 1]; ++k) {
                adj[parent_[k]] += a * partial_[k];
            }
        }
        return adj;
    }

    static double adjoint_of(const std::vector<double>& adj, const Var& x) {
        return x.is_const() ? 0.0 : adj[x.idx];
    }

    void reset() {
        heads_.clear();
        heads_.push_back(0);
        parent_.clear();
        partial_.clear();
    }

  private:
    std::int32_t next_index() const { return size(); }
    void push(std::int32_t p, double d) {
        parent_.push_back(p);
        partial_.push_back(d);
    }
    void close_node() { heads_.push_back(static_cast<std::uint32_t>(parent_.size())); }

    std::vector<std::uint32_t> heads_;
    std::vector<std::int32_t> parent_;
    std::vector<double> partial_;
};

inline Tape* tape_of(const Var& a, const Var& b) {
    return a.tape ? a.tape : b.tape;
}

// arithmetic -----------------------------------------------------------------

inline Var operator+(const Var& a, const Var& b) {
    Tape* t = tape_of(a, b);
    if (!t) return Var{a.v + b.v, -1, nullptr};
    return t->node2(a.v + b.v, a, 1.0, b, 1.0);
}
inline Var operator-(const Var& a, const Var& b) {
    Tape* t = tape_of(a, b);
    if (!t) return Var{a.v - b.v, -1, nullptr};
    return t->node2(a.v - b.v, a, 1.0, b, -1.0);
}
inline Var operator*(const Var& a, const Var& b) {
    Tape* t = tape_of(a, b);
    if (!t) return Var{a.v * b.v, -1, nullptr};
    return t->node2(a.v * b.v, a, b.v, b, a.v);
}
inline Var operator/(const Var& a, const Var& b) {
    Tape* t = tape_of(a, b);
    double inv = 1.0 / b.v;
    if (!t) return Var{a.v * inv, -1, nullptr};
    return t->node2(a.v * inv, a, inv, b, -a.v * inv * inv);
}
inline Var operator-(const Var& a) {
    if (!a.tape) return Var{-a.v, -1, nullptr};
    return a.tape->node1(-a.v, a, -1.0);
}

inline Var cvar(double v) { return Var{v, -1, nullptr}; }

inline Var operator+(const Var& a, double c) { return a.tape ? a.tape->node1(a.v + c, a, 1.0) : cvar(a.v + c); }
inline Var operator+(double c, const Var& a) { return a + c; }
inline Var operator-(const Var& a, double c) { return a + (-c); }
inline Var operator-(double c, const Var& a) { return a.tape ? a.tape->node1(c - a.v, a, -1.0) : cvar(c - a.v); }
inline Var operator*(const Var& a, double c) { return a.tape ? a.tape->node1(a.v * c, a, c) : cvar(a.v * c); }
inline Var operator*(double c, const Var& a) { return a * c; }
inline Var operator/(const Var& a, double c) { return a * (1.0 / c); }
inline Var operator/(double c, const Var& a) {
    double inv = 1.0 / a.v;
    return a.tape ? a.tape->node1(c * inv, a, -c * inv * inv) : cvar(c * inv);
}

// elementary functions --------------------------------------------------------

inline Var tanh(const Var& a) {
    double t = std::tanh(a.v);
    return a.tape ? a.tape->node1(t, a, 1.0 - t * t) : cvar(t);
}
inline Var exp(const Var& a) {
    double e = std::exp(a.v);
    return a.tape ? a.tape->node1(e, a, e) : cvar(e);
}
inline Var log(const Var& a) {
    return a.tape ? a.tape->node1(std::log(a.v), a, 1.0 / a.v) : cvar(std::log(a.v));
}
inline Var sqrt(const Var& a) {
    double s = std::sqrt(a.v);
    return a.tape ? a.tape->node1(s, a, 0.5 / s) : cvar(s);
}
inline Var abs(const Var& a) {
    double s = a.v > 0.0 ? 1.0 : (a.v < 0.0 ? -1.0 : 0.0);
    return a.tape ? a.tape->node1(std::fabs(a.v), a, s) : cvar(std::fabs(a.v));
}
inline Var square(const Var& a) { return a * a; }

inline double softplus(double x) {
    if (x > 30.0) return x;
    if (x < -30.0) return std::exp(x);
    return std::log1p(std::exp(x));
}
inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}
inline Var softplus(const Var& a) {
    return a.tape ? a.tape->node1(softplus(a.v), a, sigmoid(a.v)) : cvar(softplus(a.v));
}
inline Var sigmoid(const Var& a) {
    double s = sigmoid(a.v);
    return a.tape ? a.tape->node1(s, a, s * (1.0 - s)) : cvar(s);
}

inline double value(double x) { return x; }
inline double value(const Var& x) { return x.v; }

// ---------------------------------------------------------------------------
// Second-order forward jets in two input variables.
//
// Jet2<double> carries (value, gradient, Hessian) of a scalar expression with
// respect to two seeds; Jet2<Var> additionally makes every component a tape
// scalar, so curvature values built from the jet stay differentiable with
// respect to model parameters.
// ---------------------------------------------------------------------------

template <class T>
struct Jet2 {
    T v{};
    std::array<T, 2> d1{};   // first derivatives
    std::array<T, 3> d2{};   // (d11, d12, d22)
};

using Dual2 = Jet2<double>;

template <class T>
Jet2<T> jet_seed(T value, int axis) {
    Jet2<T> j;
    j.v = value;
    j.d1[axis] = j.v * 0.0 + 1.0;  // one in the scalar type T
    j.d1[1 - axis] = j.v * 0.0;
    j.d2 = {j.v * 0.0, j.v * 0.0, j.v * 0.0};
    return j;
}

template <class T>
Jet2<T> jet_const(T value) {
    Jet2<T> j;
    j.v = value;
    T zero = value * 0.0;
    j.d1 = {zero, zero};
    j.d2 = {zero, zero, zero};
    return j;
}

template <class T>
Jet2<T> operator+(const Jet2<T>& a, const Jet2<T>& b) {
    Jet2<T> r;
    r.v = a.v + b.v;
    for (int i = 0; i < 2; ++i) r.d1[i] = a.d1[i] + b.d1[i];
    for (int i = 0; i < 3; ++i) r.d2[i] = a.d2[i] + b.d2[i];
    return r;
}
template <class T>
Jet2<T> operator-(const Jet2<T>& a, const Jet2<T>& b) {
    Jet2<T> r;
    r.v = a.v - b.v;
    for (int i = 0; i < 2; ++i) r.d1[i] = a.d1[i] - b.d1[i];
    for (int i = 0; i < 3; ++i) r.d2[i] = a.d2[i] - b.d2[i];
    return r;
}
template <class T>
Jet2<T> operator*(const Jet2<T>& a, const Jet2<T>& b) {
    Jet2<T> r;
    r.v = a.v * b.v;
    r.d1[0] = a.d1[0] * b.v + a.v * b.d1[0];
    r.d1[1] = a.d1[1] * b.v + a.v * b.d1[1];
    r.d2[0] = a.d2[0] * b.v + a.d1[0] * b.d1[0] + a.d1[0] * b.d1[0] + a.v * b.d2[0];
    r.d2[1] = a.d2[1] * b.v + a.d1[0] * b.d1[1] + a.d1[1] * b.d1[0] + a.v * b.d2[1];
    r.d2[2] = a.d2[2] * b.v + a.d1[1] * b.d1[1] + a.d1[1] * b.d1[1] + a.v * b.d2[2];
    return r;
}

// scalar (weight) * jet and jet + scalar, for mixed parameter/input math
template <class T, class S>
Jet2<T> operator*(const S& w, const Jet2<T>& a) {
    Jet2<T> r;
    r.v = w * a.v;
    for (int i = 0; i < 2; ++i) r.d1[i] = w * a.d1[i];
    for (int i = 0; i < 3; ++i) r.d2[i] = w * a.d2[i];
    return r;
}
template <class T, class S>
Jet2<T> operator+(const Jet2<T>& a, const S& c) {
    Jet2<T> r = a;
    r.v = a.v + c;
    return r;
}
template <class T, class S>
Jet2<T> operator+(const S& c, const Jet2<T>& a) {
    return a + c;
}

// unary chain rule: r = g(a) given g'(v) and g''(v)
template <class T>
Jet2<T> jet_chain(const Jet2<T>& a, T g, T gp, T gpp) {
    Jet2<T> r;
    r.v = g;
    r.d1[0] = gp * a.d1[0];
    r.d1[1] = gp * a.d1[1];
    r.d2[0] = gp * a.d2[0] + gpp * a.d1[0] * a.d1[0];
    r.d2[1] = gp * a.d2[1] + gpp * a.d1[0] * a.d1[1];
    r.d2[2] = gp * a.d2[2] + gpp * a.d1[1] * a.d1[1];
    return r;
}

template <class T>
Jet2<T> tanh(const Jet2<T>& a) {
    using std::tanh;
    T t = tanh(a.v);
    T one_m = 1.0 - t * t;
    // (tanh)'' = -2 t (1 - t^2)
    return jet_chain(a, t, one_m, -2.0 * t * one_m);
}
template <class T>
Jet2<T> log(const Jet2<T>& a) {
    using std::log;
    T inv = 1.0 / a.v;
    return jet_chain(a, log(a.v), inv, -1.0 * inv * inv);
}
template <class T>
Jet2<T> exp(const Jet2<T>& a) {
    using std::exp;
    T e = exp(a.v);
    return jet_chain(a, e, e, e);
}
template <class T>
Jet2<T> sqrt(const Jet2<T>& a) {
    using std::sqrt;
    T s = sqrt(a.v);
    T gp = 0.5 / s;
    return jet_chain(a, s, gp, -0.5 * gp / a.v);
}
template <class T>
Jet2<T> operator/(const Jet2<T>& a, const Jet2<T>& b) {
    T inv = 1.0 / b.v;
    return a * jet_chain(b, inv, -1.0 * inv * inv, 2.0 * inv * inv * inv);
}

// ---------------------------------------------------------------------------
// Dense matrix and one-hidden-layer perceptron
// ---------------------------------------------------------------------------

struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> a;  // row-major

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}
    double& operator()(int i, int j) { return a[static_cast<std::size_t>(i) * cols + j]; }
    double operator()(int i, int j) const { return a[static_cast<std::size_t>(i) * cols + j]; }
};

// x <- W v for any scalar mix: W entries TW, v entries TX
template <class TW, class TX>
void matvec(const std::vector<TW>& w, int rows, int cols, const TX* v, TX* out) {
    for (int i = 0; i < rows; ++i) {
        TX acc = w[static_cast<std::size_t>(i) * cols] * v[0];
        for (int j = 1; j < cols; ++j) {
            acc = acc + w[static_cast<std::size_t>(i) * cols + j] * v[j];
        }
        out[i] = acc;
    }
}

// Fully connected net with one hidden tanh layer. The tanh derivative is
// bounded by one, which keeps layer spectral norms an upper bound on the
// network Lipschitz constant.
template <class T>
struct MlpT {
    int in = 0, hidden = 0, out = 0;
    std::vector<T> w1, b1, w2, b2;  // w1: hidden x in, w2: out x hidden

    void resize(int i, int h, int o) {
        in = i;
        hidden = h;
        out = o;
        w1.assign(static_cast<std::size_t>(h) * i, T{});
        b1.assign(h, T{});
        w2.assign(static_cast<std::size_t>(o) * h, T{});
        b2.assign(o, T{});
    }
};

using MlpParams = MlpT<double>;

template <class TW, class TX>
void mlp_apply(const MlpT<TW>& m, const TX* x, TX* y) {
    std::vector<TX> h(m.hidden);
    matvec(m.w1, m.hidden, m.in, x, h.data());
    for (int k = 0; k < m.hidden; ++k) {
        using std::tanh;
        h[k] = tanh(h[k] + m.b1[k]);
    }
    matvec(m.w2, m.out, m.hidden, h.data(), y);
    for (int i = 0; i < m.out; ++i) y[i] = y[i] + m.b2[i];
}

// parameter vector layout for one net: w1, b1, w2, b2
inline std::size_t param_count(const MlpParams& m) {
    return m.w1.size() + m.b1.size() + m.w2.size() + m.b2.size();
}
void flatten(const MlpParams& m, std::vector<double>& out);
void unflatten(MlpParams& m, const double* data);

// lifts parameters onto the tape as leaves in flatten order; a null leaves
// list makes them constants (gradients blocked)
MlpT<Var> lift_mlp(Tape& tape, const MlpParams& m, std::vector<Var>* leaves);

// ---------------------------------------------------------------------------
// Gradient / Hessian / spectral norm entry points
// ---------------------------------------------------------------------------

// gradient of a scalar expression of n leaves, same layout as params
std::vector<double> gradient_of(const std::function<Var(Tape&, std::span<const Var>)>& fn,
                                std::span<const double> params);

// value, gradient and Hessian of f at (u1, u2) via nested forward jets
template <class F>
Dual2 hessian2(F&& f, double u1, double u2) {
    Jet2<double> a = jet_seed(u1, 0);
    Jet2<double> b = jet_seed(u2, 1);
    return f(a, b);
}

// largest singular value by power iteration on W^T W; warm (if given) holds the
// running right-singular-vector estimate and is updated in place
double spectral_norm(const Mat& w, int iters, std::vector<double>* warm = nullptr);

}  // namespace cfb::ad

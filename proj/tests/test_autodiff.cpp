#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "cfb/autodiff.hpp"
#include "cfb/rng.hpp"

using namespace cfb;
using ad::Var;

namespace {

// test function with non-trivial mixed partials
template <class T>
T crooked(T x, T y) {
    using std::exp;
    using std::log;
    using std::sqrt;
    using std::tanh;
    return exp(0.5 * x) * tanh(y) + x * x * y + log(2.0 + x) / sqrt(1.0 + y * y);
}

double fd_partial(int axis, double x, double y, double h = 1e-6) {
    double xp = axis == 0 ? x + h : x;
    double yp = axis == 1 ? y + h : y;
    double xm = axis == 0 ? x - h : x;
    double ym = axis == 1 ? y - h : y;
    return (crooked(xp, yp) - crooked(xm, ym)) / (2.0 * h);
}

}  // namespace

TEST_CASE("tape gradient matches finite differences") {
    double x0 = 0.37, y0 = -0.81;
    ad::Tape tape;
    Var x = tape.leaf(x0);
    Var y = tape.leaf(y0);
    Var f = crooked(x, y);
    CHECK(f.v == doctest::Approx(crooked(x0, y0)));
    std::vector<double> adj = tape.gradient(f);
    CHECK(ad::Tape::adjoint_of(adj, x) == doctest::Approx(fd_partial(0, x0, y0)).epsilon(1e-6));
    CHECK(ad::Tape::adjoint_of(adj, y) == doctest::Approx(fd_partial(1, x0, y0)).epsilon(1e-6));
}

TEST_CASE("constants stay off the tape") {
    ad::Tape tape;
    Var x = tape.leaf(2.0);
    Var c = ad::cvar(3.0);
    Var f = x * c + c * c;
    CHECK(f.v == 15.0);
    std::vector<double> adj = tape.gradient(f);
    CHECK(ad::Tape::adjoint_of(adj, x) == 3.0);
    CHECK(ad::Tape::adjoint_of(adj, c) == 0.0);
    // pure-constant arithmetic allocates no nodes beyond the leaf
    ad::Tape t2;
    Var a = ad::cvar(1.0), b = ad::cvar(2.0);
    Var s = a * b + ad::exp(a);
    CHECK(s.is_const());
    CHECK(t2.size() == 0);
}

TEST_CASE("reset clears the tape") {
    ad::Tape tape;
    Var x = tape.leaf(1.0);
    Var f = x * x;
    CHECK(f.idx >= 0);
    tape.reset();
    CHECK(tape.size() == 0);
}

TEST_CASE("softplus and sigmoid are stable at extremes") {
    CHECK(ad::softplus(100.0) == 100.0);
    CHECK(ad::softplus(-100.0) == doctest::Approx(std::exp(-100.0)));
    CHECK(ad::softplus(0.0) == doctest::Approx(std::log(2.0)));
    CHECK(ad::sigmoid(0.0) == 0.5);
    CHECK(ad::sigmoid(40.0) == doctest::Approx(1.0));
    CHECK(ad::sigmoid(-40.0) == doctest::Approx(0.0));
}

TEST_CASE("mlp parameter gradient matches finite differences") {
    ad::MlpParams mlp;
    mlp.resize(2, 4, 1);
    Rng rng(5);
    std::vector<double> theta(ad::param_count(mlp));
    for (double& w : theta) w = rng.uniform(-0.8, 0.8);

    auto eval = [&](std::span<const double> p) {
        ad::MlpParams m = mlp;
        ad::unflatten(m, p.data());
        double in[2] = {0.3, -0.6};
        double out[1];
        ad::mlp_apply(m, in, out);
        return out[0] * out[0];
    };
    auto taped = [&](ad::Tape&, std::span<const Var> p) {
        ad::MlpT<Var> lifted;
        lifted.resize(mlp.in, mlp.hidden, mlp.out);
        // wire the lifted leaves directly so the taped net shares p
        std::size_t k = 0;
        for (auto* dst : {&lifted.w1, &lifted.b1, &lifted.w2, &lifted.b2}) {
            for (auto& v : *dst) v = p[k++];
        }
        Var in[2] = {ad::cvar(0.3), ad::cvar(-0.6)};
        Var out[1];
        ad::mlp_apply(lifted, in, out);
        return out[0] * out[0];
    };

    std::vector<double> grad = ad::gradient_of(taped, theta);
    REQUIRE(grad.size() == theta.size());
    for (std::size_t i = 0; i < theta.size(); ++i) {
        double h = 1e-6;
        std::vector<double> tp = theta, tm = theta;
        tp[i] += h;
        tm[i] -= h;
        double fd = (eval(tp) - eval(tm)) / (2.0 * h);
        CHECK(grad[i] == doctest::Approx(fd).epsilon(1e-5));
    }
}

TEST_CASE("lift_mlp reproduces values and exposes leaves in flatten order") {
    ad::MlpParams m;
    m.resize(2, 3, 2);
    Rng rng(9);
    std::vector<double> theta(ad::param_count(m));
    for (double& w : theta) w = rng.uniform(-1.0, 1.0);
    ad::unflatten(m, theta.data());

    ad::Tape tape;
    std::vector<Var> leaves;
    ad::MlpT<Var> lifted = ad::lift_mlp(tape, m, &leaves);
    REQUIRE(leaves.size() == theta.size());
    for (std::size_t i = 0; i < theta.size(); ++i) CHECK(leaves[i].v == theta[i]);

    double in[2] = {0.2, 0.9};
    double out[2];
    ad::mlp_apply(m, in, out);
    Var tin[2] = {ad::cvar(0.2), ad::cvar(0.9)};
    Var tout[2];
    ad::mlp_apply(lifted, tin, tout);
    CHECK(tout[0].v == doctest::Approx(out[0]).epsilon(1e-15));
    CHECK(tout[1].v == doctest::Approx(out[1]).epsilon(1e-15));

    // constants variant blocks gradients entirely
    ad::Tape t2;
    ad::MlpT<Var> frozen = ad::lift_mlp(t2, m, nullptr);
    CHECK(t2.size() == 0);
    for (const Var& v : frozen.w1) CHECK(v.is_const());
}

TEST_CASE("second-order jets carry exact derivatives") {
    double x0 = 0.42, y0 = -0.3;
    ad::Dual2 j = ad::hessian2(
        [](ad::Jet2<double> a, ad::Jet2<double> b) { return crooked(a, b); }, x0, y0);
    CHECK(j.v == doctest::Approx(crooked(x0, y0)));
    CHECK(j.d1[0] == doctest::Approx(fd_partial(0, x0, y0)).epsilon(1e-6));
    CHECK(j.d1[1] == doctest::Approx(fd_partial(1, x0, y0)).epsilon(1e-6));

    // second derivatives against central differences of first FD derivatives
    double h = 1e-4;
    double dxx = (fd_partial(0, x0 + h, y0) - fd_partial(0, x0 - h, y0)) / (2.0 * h);
    double dxy = (fd_partial(0, x0, y0 + h) - fd_partial(0, x0, y0 - h)) / (2.0 * h);
    double dyy = (fd_partial(1, x0, y0 + h) - fd_partial(1, x0, y0 - h)) / (2.0 * h);
    CHECK(j.d2[0] == doctest::Approx(dxx).epsilon(1e-4));
    CHECK(j.d2[1] == doctest::Approx(dxy).epsilon(1e-4));
    CHECK(j.d2[2] == doctest::Approx(dyy).epsilon(1e-4));
}

TEST_CASE("jets on a polynomial are exact") {
    // f = x^2 y + 3 x: fx = 2xy + 3, fy = x^2, fxx = 2y, fxy = 2x, fyy = 0
    auto f = [](auto x, auto y) { return x * x * y + 3.0 * x; };
    ad::Dual2 j = ad::hessian2([&](ad::Jet2<double> a, ad::Jet2<double> b) { return f(a, b); },
                               1.5, -2.0);
    CHECK(j.v == 1.5 * 1.5 * -2.0 + 4.5);
    CHECK(j.d1[0] == 2.0 * 1.5 * -2.0 + 3.0);
    CHECK(j.d1[1] == 1.5 * 1.5);
    CHECK(j.d2[0] == -4.0);
    CHECK(j.d2[1] == 3.0);
    CHECK(j.d2[2] == 0.0);
}

TEST_CASE("spectral norm of small matrices") {
    // diagonal: largest absolute entry
    ad::Mat d(3, 3);
    d(0, 0) = -4.0;
    d(1, 1) = 2.0;
    d(2, 2) = 0.5;
    CHECK(ad::spectral_norm(d, 100) == doctest::Approx(4.0).epsilon(1e-10));

    // 2x2 with closed-form singular values
    ad::Mat w(2, 2);
    w(0, 0) = 3.0;
    w(0, 1) = 1.0;
    w(1, 0) = 1.0;
    w(1, 1) = 3.0;
    // symmetric, eigenvalues 4 and 2
    CHECK(ad::spectral_norm(w, 100) == doctest::Approx(4.0).epsilon(1e-10));

    // rectangular: closed form from the 2x2 Gram matrix
    ad::Mat r(2, 3);
    Rng rng(31);
    for (double& v : r.a) v = rng.uniform(-1.0, 1.0);
    double g00 = 0.0, g01 = 0.0, g11 = 0.0;
    for (int j = 0; j < 3; ++j) {
        g00 += r(0, j) * r(0, j);
        g01 += r(0, j) * r(1, j);
        g11 += r(1, j) * r(1, j);
    }
    double tr = g00 + g11;
    double det = g00 * g11 - g01 * g01;
    double lam = 0.5 * (tr + std::sqrt(tr * tr - 4.0 * det));
    CHECK(ad::spectral_norm(r, 200) == doctest::Approx(std::sqrt(lam)).epsilon(1e-8));

    // warm restarts converge to the same value
    std::vector<double> warm;
    double first = ad::spectral_norm(r, 5, &warm);
    double second = ad::spectral_norm(r, 5, &warm);
    CHECK(second == doctest::Approx(std::sqrt(lam)).epsilon(1e-6));
    CHECK(first <= second + 1e-6);
    CHECK(first > 0.0);
}

TEST_CASE("flatten and unflatten round trip") {
    ad::MlpParams m;
    m.resize(3, 5, 2);
    Rng rng(77);
    for (auto* block : {&m.w1, &m.b1, &m.w2, &m.b2}) {
        for (double& v : *block) v = rng.normal();
    }
    std::vector<double> flat;
    ad::flatten(m, flat);
    REQUIRE(flat.size() == ad::param_count(m));
    ad::MlpParams back;
    back.resize(3, 5, 2);
    ad::unflatten(back, flat.data());
    CHECK(back.w1 == m.w1);
    CHECK(back.b1 == m.b1);
    CHECK(back.w2 == m.w2);
    CHECK(back.b2 == m.b2);
}

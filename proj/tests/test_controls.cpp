#include <catch2/catch_amalgamated.hpp>

#include "evac/controls.hpp"
#include "oracles.hpp"

using namespace evac;
using Catch::Approx;

TEST_CASE("h1 inner product: constants, jumps, bilinearity", "[controls]") {
    const int N = 7;
    const double tau = 0.25;

    // Constant grids: difference terms vanish, tau (N+1) remains.
    std::vector<Vec2> u(N + 1, Vec2{1.0, 0.0});
    REQUIRE(h1_inner(std::span<const Vec2>(u), std::span<const Vec2>(u), tau) ==
            Approx(tau * (N + 1)).epsilon(1e-15));

    // A single unit jump adds 1/tau to the self product.
    std::vector<double> a(N + 1, 0.0);
    for (int n = 4; n <= N; ++n) a[n] = 1.0;
    const double self = h1_inner(std::span<const double>(a), std::span<const double>(a), tau);
    REQUIRE(self == Approx(tau * 4 + 1.0 / tau).epsilon(1e-15));

    // Bilinearity on random grids.
    std::vector<double> x(N + 1), y(N + 1), z(N + 1);
    for (int n = 0; n <= N; ++n) {
        x[n] = oracles::uniform(-1, 1);
        y[n] = oracles::uniform(-1, 1);
        z[n] = oracles::uniform(-1, 1);
    }
    std::vector<double> yz(N + 1);
    for (int n = 0; n <= N; ++n) yz[n] = y[n] + z[n];
    const double lhs = h1_inner(std::span<const double>(x), std::span<const double>(yz), tau);
    const double rhs = h1_inner(std::span<const double>(x), std::span<const double>(y), tau) +
                       h1_inner(std::span<const double>(x), std::span<const double>(z), tau);
    REQUIRE(lhs == Approx(rhs).margin(1e-14));
}

TEST_CASE("gram matrix represents the h1 inner product and solves exactly", "[controls]") {
    const int N = 12;
    const double tau = 0.15;
    const H1Gram gram(N, tau);

    std::vector<double> a(N + 1), b(N + 1);
    for (int n = 0; n <= N; ++n) {
        a[n] = oracles::uniform(-2, 2);
        b[n] = oracles::uniform(-2, 2);
    }
    // (a, b)_H1 = b^T G a.
    const auto ga = gram.apply(a);
    double quad = 0.0;
    for (int n = 0; n <= N; ++n) quad += b[n] * ga[n];
    REQUIRE(quad == Approx(h1_inner(std::span<const double>(a), std::span<const double>(b), tau)).epsilon(1e-13));

    // Thomas solve then apply round-trips.
    const auto x = gram.solve(b);
    const auto back = gram.apply(x);
    for (int n = 0; n <= N; ++n) REQUIRE(back[n] == Approx(b[n]).margin(1e-12));
}

TEST_CASE("control grid layout and combined norm", "[controls]") {
    ControlGrid q(2, 5, 0.1);
    REQUIRE(q.u.size() == 12);
    REQUIRE(q.c.size() == 12);
    q.u[q.index(1, 3)] = {0.5, -0.5};
    REQUIRE(q.u_agent(1)[3].x == 0.5);
    for (auto& c : q.c) c = 1.0;
    // c constant 1 for both agents contributes 2 tau (N+1); the single u node
    // contributes tau |u|^2 plus two difference terms |u|^2 / tau.
    const double u2 = 0.5;
    const double expect = 2 * 0.1 * 6 + 0.1 * u2 + 2.0 * u2 / 0.1;
    REQUIRE(control_inner(q, q) == Approx(expect).epsilon(1e-13));
    REQUIRE(control_norm(q) == Approx(std::sqrt(expect)).epsilon(1e-13));
}

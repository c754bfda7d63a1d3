#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "lsps/core/rng.hpp"
#include "lsps/graph/gradcheck.hpp"
#include "lsps/graph/graph.hpp"
#include "lsps/models/params.hpp"

using namespace lsps;

namespace {

ParamStore<double> store_with(const std::string& name, std::vector<int> shape, uint64_t seed) {
    ParamStore<double> ps;
    ps.declare(name, name, shape);
    Rng rng(seed);
    for (auto& v : ps.cell(name).data) v = rng.normal();
    return ps;
}

void fill_normal(Tensor<double>& t, uint64_t seed, double scale = 1.0) {
    Rng rng(seed);
    for (auto& v : t.data) v = scale * rng.normal();
}

}  // namespace

TEST_CASE("elementwise op gradients") {
    auto ps = store_with("w", {3, 4}, 11);
    // keep values away from kinks/poles of abs, sqrt, log
    for (auto& v : ps.cell("w").data) v = 0.5 + std::abs(v);

    struct Case {
        const char* name;
        std::function<Graph<double>::Nd(Graph<double>&, Graph<double>::Nd)> op;
    };
    const Case cases[] = {
        {"exp", [](Graph<double>& g, auto* x) { return g.exp_(x); }},
        {"log", [](Graph<double>& g, auto* x) { return g.log_(x); }},
        {"sqrt", [](Graph<double>& g, auto* x) { return g.sqrt_(x); }},
        {"abs", [](Graph<double>& g, auto* x) { return g.abs_(x); }},
        {"square", [](Graph<double>& g, auto* x) { return g.square(x); }},
        {"tanh", [](Graph<double>& g, auto* x) { return g.tanh_(x); }},
        {"sigmoid", [](Graph<double>& g, auto* x) { return g.sigmoid_(x); }},
        {"scale", [](Graph<double>& g, auto* x) { return g.scale(x, -2.5); }},
        {"add_scalar", [](Graph<double>& g, auto* x) { return g.add_scalar(x, 1.5); }},
        {"lrelu", [](Graph<double>& g, auto* x) { return g.leaky_relu(x, 0.2); }},
    };
    for (const auto& c : cases) {
        CAPTURE(c.name);
        auto rep = grad_check(
            ps,
            [&](Graph<double>& g) {
                auto* w = g.param("w", ps.cell("w"));
                return g.sum_all(c.op(g, w));
            },
            7);
        CHECK(rep.checked > 0);
        CHECK(rep.max_rel_err < 1e-6);
    }
}

TEST_CASE("leaky_relu slope on the negative side") {
    ParamStore<double> ps;
    ps.declare("w", "w", {2});
    ps.cell("w")[0] = -3.0;
    ps.cell("w")[1] = 2.0;
    Graph<double> g;
    auto* y = g.leaky_relu(g.param("w", ps.cell("w")), 0.2);
    CHECK(y->val[0] == doctest::Approx(-0.6));
    CHECK(y->val[1] == doctest::Approx(2.0));
    g.backward(g.sum_all(y));
    CHECK(g.param_nodes().at("w")->grad[0] == doctest::Approx(0.2));
    CHECK(g.param_nodes().at("w")->grad[1] == doctest::Approx(1.0));
}

TEST_CASE("binary op gradients with two cells") {
    ParamStore<double> ps;
    ps.declare("a", "a", {2, 3});
    ps.declare("b", "b", {2, 3});
    fill_normal(ps.cell("a"), 21);
    fill_normal(ps.cell("b"), 22);
    for (auto& v : ps.cell("b").data) v += v < 0 ? -0.5 : 0.5;  // keep away from 0 for div-free ops

    for (int which = 0; which < 3; ++which) {
        auto rep = grad_check(
            ps,
            [&](Graph<double>& g) {
                auto* a = g.param("a", ps.cell("a"));
                auto* b = g.param("b", ps.cell("b"));
                auto* y = which == 0 ? g.add(a, b) : which == 1 ? g.sub(a, b) : g.mul(a, b);
                return g.sum_all(g.square(y));
            },
            31);
        CHECK(rep.max_rel_err < 1e-6);
    }
}

TEST_CASE("clamp passes gradient only inside the interval") {
    ParamStore<double> ps;
    ps.declare("w", "w", {3});
    ps.cell("w")[0] = -2.0;
    ps.cell("w")[1] = 0.3;
    ps.cell("w")[2] = 2.0;
    Graph<double> g;
    auto* y = g.clamp(g.param("w", ps.cell("w")), -1.0, 1.0);
    CHECK(y->val[0] == -1.0);
    CHECK(y->val[1] == 0.3);
    CHECK(y->val[2] == 1.0);
    g.backward(g.sum_all(y));
    const auto& grad = g.param_nodes().at("w")->grad;
    CHECK(grad[0] == 0.0);
    CHECK(grad[1] == 1.0);
    CHECK(grad[2] == 0.0);
}

TEST_CASE("reductions and reshape") {
    auto ps = store_with("w", {3, 4}, 41);

    {
        Graph<double> g;
        auto* w = g.param("w", ps.cell("w"));
        auto* rs = g.row_sum(w);
        CHECK(rs->val.shape == std::vector<int>{3});
        double want = 0;
        for (int j = 0; j < 4; ++j) want += ps.cell("w")[j];
        CHECK(rs->val[0] == doctest::Approx(want));

        auto* m = g.mean_all(w);
        double s = 0;
        for (auto v : ps.cell("w").data) s += v;
        CHECK(m->val[0] == doctest::Approx(s / 12.0));

        auto* r = g.reshape(w, {4, 3});
        CHECK(r->val.shape == std::vector<int>{4, 3});
        CHECK(r->val[5] == ps.cell("w")[5]);
    }

    for (int which = 0; which < 3; ++which) {
        auto rep = grad_check(
            ps,
            [&](Graph<double>& g) {
                auto* w = g.param("w", ps.cell("w"));
                auto* y = which == 0   ? g.row_sum(g.square(w))
                          : which == 1 ? g.mean_all(g.square(w))
                                       : g.reshape(g.square(w), {12});
                return g.sum_all(g.mul(y, y));
            },
            51);
        CHECK(rep.max_rel_err < 1e-6);
    }
}

TEST_CASE("spatial_mean reduces NCHW to NC") {
    ParamStore<double> ps;
    ps.declare("w", "w", {2, 3, 2, 2});
    fill_normal(ps.cell("w"), 61);
    {
        Graph<double> g;
        auto* y = g.spatial_mean(g.param("w", ps.cell("w")));
        CHECK(y->val.shape == std::vector<int>{2, 3});
        double want = 0;
        for (int i = 0; i < 4; ++i) want += ps.cell("w")[i];
        CHECK(y->val[0] == doctest::Approx(want / 4.0));
    }
    auto rep = grad_check(
        ps,
        [&](Graph<double>& g) {
            return g.sum_all(g.square(g.spatial_mean(g.param("w", ps.cell("w")))));
        },
        62);
    CHECK(rep.max_rel_err < 1e-6);
}

TEST_CASE("linear layer gradients") {
    ParamStore<double> ps;
    ps.declare("W", "W", {5, 3});
    ps.declare("b", "b", {5});
    ps.declare("x", "x", {2, 3});
    fill_normal(ps.cell("W"), 71);
    fill_normal(ps.cell("b"), 72);
    fill_normal(ps.cell("x"), 73);
    auto rep = grad_check(
        ps,
        [&](Graph<double>& g) {
            auto* y = g.linear(g.param("x", ps.cell("x")), g.param("W", ps.cell("W")),
                               g.param("b", ps.cell("b")));
            return g.sum_all(g.square(y));
        },
        74);
    CHECK(rep.checked == 5 * 3 + 5 + 2 * 3);
    CHECK(rep.max_rel_err < 1e-6);
}

TEST_CASE("conv2d / tconv2d / instance_norm gradients") {
    ParamStore<double> ps;
    ps.declare("x", "x", {2, 4, 5, 5});
    ps.declare("w", "w", {3, 4, 3, 3});
    ps.declare("b", "b", {3});
    ps.declare("tw", "tw", {4, 2, 3, 3});
    ps.declare("tb", "tb", {2});
    fill_normal(ps.cell("x"), 81);
    fill_normal(ps.cell("w"), 82, 0.5);
    fill_normal(ps.cell("b"), 83);
    fill_normal(ps.cell("tw"), 84, 0.5);
    fill_normal(ps.cell("tb"), 85);

    auto rep = grad_check(
        ps,
        [&](Graph<double>& g) {
            auto* y = g.conv2d(g.param("x", ps.cell("x")), g.param("w", ps.cell("w")),
                               g.param("b", ps.cell("b")), 2, 1, 1);
            return g.sum_all(g.square(y));
        },
        86);
    CHECK(rep.max_rel_err < 1e-5);

    rep = grad_check(
        ps,
        [&](Graph<double>& g) {
            auto* y = g.tconv2d(g.param("x", ps.cell("x")), g.param("tw", ps.cell("tw")),
                                g.param("tb", ps.cell("tb")), 2, 1, 1, 1);
            return g.sum_all(g.square(y));
        },
        87, 0, 1e-5, 1e-6,
        [](const std::string& n) { return n != "w" && n != "b"; });
    CHECK(rep.max_rel_err < 1e-5);

    // random cotangent breaks the near-invariance of sum(norm^2)
    Tensor<double> R({2, 4, 5, 5});
    fill_normal(R, 89);
    rep = grad_check(
        ps,
        [&](Graph<double>& g) {
            auto* y = g.instance_norm(g.param("x", ps.cell("x")));
            return g.sum_all(g.mul(y, g.input(R)));
        },
        88, 0, 1e-5, 1e-6, [](const std::string& n) { return n == "x"; });
    CHECK(rep.checked > 0);
    CHECK(rep.max_rel_err < 1e-6);
}

TEST_CASE("gradients accumulate across fan-out") {
    ParamStore<double> ps;
    ps.declare("w", "w", {1});
    ps.cell("w")[0] = 1.7;
    Graph<double> g;
    auto* w = g.param("w", ps.cell("w"));
    // y = w*w + 3w used twice through shared subexpressions
    auto* y = g.add(g.mul(w, w), g.scale(w, 3.0));
    g.backward(g.sum_all(y));
    CHECK(g.param_nodes().at("w")->grad[0] == doctest::Approx(2 * 1.7 + 3.0));
}

TEST_CASE("param nodes are memoized by canonical name") {
    ParamStore<double> ps;
    ps.declare("alias", "cell", {2});
    ps.declare("cell", "cell", {2});
    ps.cell("cell")[0] = 1.0;
    ps.cell("cell")[1] = 2.0;
    Graph<double> g;
    auto* a = g.param("cell", ps.cell("alias"));
    auto* b = g.param("cell", ps.cell("cell"));
    CHECK(a == b);
    CHECK(g.param_nodes().size() == 1);
}

TEST_CASE("trainable filter blocks gradient allocation") {
    ParamStore<double> ps;
    ps.declare("frozen", "frozen", {2});
    ps.declare("live", "live", {2});
    fill_normal(ps.cell("frozen"), 91);
    fill_normal(ps.cell("live"), 92);
    Graph<double> g;
    g.set_trainable_filter([](const std::string& n) { return n == "live"; });
    auto* f = g.param("frozen", ps.cell("frozen"));
    auto* l = g.param("live", ps.cell("live"));
    auto* loss = g.sum_all(g.square(g.mul(f, l)));
    g.backward(loss);
    CHECK_FALSE(g.param_nodes().at("frozen")->needs_grad);
    CHECK(g.param_nodes().at("frozen")->grad.data.empty());
    REQUIRE(g.param_nodes().at("live")->needs_grad);
    const double want = 2.0 * ps.cell("live")[0] * ps.cell("frozen")[0] * ps.cell("frozen")[0];
    CHECK(g.param_nodes().at("live")->grad[0] == doctest::Approx(want));
}

TEST_CASE("backward on a scalar seeds with one") {
    ParamStore<double> ps;
    ps.declare("w", "w", {1});
    ps.cell("w")[0] = 2.0;
    Graph<double> g;
    auto* loss = g.square(g.param("w", ps.cell("w")));
    g.backward(loss);
    CHECK(g.param_nodes().at("w")->grad[0] == doctest::Approx(4.0));
}

TEST_CASE("composite expression matches hand derivative") {
    // L = mean( tanh(w)^2 ) over 4 elements
    ParamStore<double> ps;
    ps.declare("w", "w", {4});
    fill_normal(ps.cell("w"), 95);
    Graph<double> g;
    auto* w = g.param("w", ps.cell("w"));
    auto* loss = g.mean_all(g.square(g.tanh_(w)));
    g.backward(loss);
    for (int i = 0; i < 4; ++i) {
        const double t = std::tanh(ps.cell("w")[i]);
        const double want = 2.0 * t * (1.0 - t * t) / 4.0;
        CHECK(g.param_nodes().at("w")->grad[i] == doctest::Approx(want).epsilon(1e-12));
    }
}

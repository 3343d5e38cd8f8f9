#include "dataiq/dynamics.hpp"
#include "dataiq/rng.hpp"

#include <doctest.h>

#include <cmath>

using namespace dataiq;

namespace {

Vector vec(std::initializer_list<double> v)
{
    Vector out(static_cast<Index>(v.size()));
    Index i = 0;
    for (double x : v) out[i++] = x;
    return out;
}

// Binary log where row n of `traj` is the class-1 probability trajectory of example n (label 1).
DynamicsLog binary_log(const std::vector<std::vector<double>>& traj)
{
    DynamicsLog log;
    const auto n = static_cast<Index>(traj.size());
    const auto e = static_cast<Index>(traj.front().size());
    log.labels = IntVector::Ones(n);
    for (Index i = 0; i < n; ++i) log.example_ids.push_back(i);
    for (Index c = 0; c < e; ++c) {
        Matrix p(n, 2);
        for (Index i = 0; i < n; ++i) {
            const double q = traj[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
            p(i, 0) = 1.0 - q;
            p(i, 1) = q;
        }
        log.probs.push_back(p);
    }
    return log;
}

} // namespace

TEST_CASE("decompose worked examples")
{
    const auto half = decompose(vec({0.5, 0.5, 0.5}));
    CHECK(half.confidence == 0.5);
    CHECK(half.aleatoric == 0.25);
    CHECK(half.epistemic == 0.0);

    const auto one = decompose(vec({1, 1, 1}));
    CHECK(one.confidence == 1.0);
    CHECK(one.aleatoric == 0.0);
    CHECK(one.epistemic == 0.0);

    const auto flip = decompose(vec({1.0, 0.0}));
    CHECK(flip.confidence == 0.5);
    CHECK(flip.aleatoric == 0.0);
    CHECK(flip.epistemic == 0.25);
}

TEST_CASE("decompose identity, bounds and permutation invariance")
{
    Rng rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> len(2, 50);
    for (int t = 0; t < 2000; ++t) {
        Vector p(len(rng));
        for (Index i = 0; i < p.size(); ++i) p[i] = u(rng);
        const auto d = decompose(p);
        CHECK(std::abs(d.aleatoric + d.epistemic - d.confidence * (1 - d.confidence)) < 1e-9);
        CHECK(d.aleatoric >= 0.0);
        CHECK(d.aleatoric <= 0.25);
        CHECK(d.epistemic >= 0.0);
        CHECK(d.epistemic <= 0.25);
        Vector r = p.reverse();
        const auto dr = decompose(r);
        CHECK(dr.aleatoric == doctest::Approx(d.aleatoric).epsilon(1e-12));
        CHECK(dr.epistemic == doctest::Approx(d.epistemic).epsilon(1e-12));
    }
}

TEST_CASE("aum_score")
{
    Matrix z(2, 3);
    z << 2, 1, 0, 0, 2, 1;
    CHECK(aum_score(z, 0) == doctest::Approx(-0.5));

    CHECK(aum_score(Matrix::Constant(4, 3, 1.7), 2) == 0.0);

    for (Index e : {1, 2, 7}) {
        Matrix c(e, 2);
        c.col(0).setConstant(3);
        c.col(1).setConstant(1);
        CHECK(aum_score(c, 0) == 2.0);
    }
    Matrix rev = z.colwise().reverse();
    CHECK(aum_score(rev, 0) == aum_score(z, 0));
    CHECK_THROWS_AS(aum_score(Matrix::Zero(2, 1), 0), ValidationError);
}

TEST_CASE("error_count")
{
    Matrix right(3, 2);
    right << 0.1, 0.9, 0.2, 0.8, 0.4, 0.6;
    CHECK(error_count(right, 1) == 0);
    CHECK(error_count(right, 0) == 3);
    CHECK(error_count(Matrix::Constant(5, 2, 0.5), 1) == 5);
    CHECK(error_count(Matrix::Constant(5, 2, 0.5), 0) == 0);
}

TEST_CASE("compute_metrics")
{
    SUBCASE("constant one half")
    {
        const auto m = compute_metrics(binary_log({{0.5, 0.5, 0.5}, {0.5, 0.5, 0.5}}));
        for (Index i = 0; i < 2; ++i) {
            CHECK(m.confidence[i] == 0.5);
            CHECK(m.aleatoric[i] == 0.25);
            CHECK(m.epistemic[i] == 0.0);
        }
    }
    SUBCASE("two trajectories")
    {
        const auto m = compute_metrics(binary_log({{1, 1}, {1, 0}}));
        CHECK(m.confidence[0] == 1.0);
        CHECK(m.aleatoric[0] == 0.0);
        CHECK(m.epistemic[0] == 0.0);
        CHECK(m.confidence[1] == 0.5);
        CHECK(m.aleatoric[1] == 0.0);
        CHECK(m.epistemic[1] == 0.25);
        CHECK(!m.aum.has_value());
        m.validate();
    }
    SUBCASE("true class drives the trajectory")
    {
        auto log = binary_log({{0.2, 0.4}});
        log.labels[0] = 0;
        const auto m = compute_metrics(log);
        CHECK(m.confidence[0] == doctest::Approx(0.7));
    }
    SUBCASE("logits fill aum and error count")
    {
        auto log = binary_log({{0.8, 0.3}});
        Matrix z0(1, 2), z1(1, 2);
        z0 << 0.0, 1.0;
        z1 << 0.5, 0.0;
        log.logits = std::vector<Matrix>{z0, z1};
        const auto m = compute_metrics(log);
        REQUIRE(m.aum.has_value());
        CHECK((*m.aum)[0] == doctest::Approx(0.25));
        REQUIRE(m.error_count.has_value());
        CHECK((*m.error_count)[0] == 1);
    }
}

TEST_CASE("law of total variance by sampling")
{
    Rng rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Vector p(8);
    for (Index i = 0; i < p.size(); ++i) p[i] = u(rng);
    const auto d = decompose(p);
    const double target = d.aleatoric + d.epistemic;

    const int draws = 200000;
    std::uniform_int_distribution<Index> pick(0, p.size() - 1);
    double ones = 0;
    for (int i = 0; i < draws; ++i) ones += u(rng) < p[pick(rng)] ? 1.0 : 0.0;
    const double mean = ones / draws;
    const double var = mean * (1 - mean);
    // Standard error of the Bernoulli variance estimate.
    const double se = std::sqrt(mean * (1 - mean) * (1 - 2 * mean) * (1 - 2 * mean) / draws) + 1e-6;
    CHECK(std::abs(var - target) < 3 * se + 1e-4);
}

TEST_CASE("separation under averaging")
{
    const Index e = 12;
    Rng rng(3);
    std::uniform_real_distribution<double> jitter(-0.05, 0.05);
    std::uniform_real_distribution<double> start(0.0, 1.0);
    double max_b = 0.0;
    double min_a = 1.0;
    for (int n = 0; n < 200; ++n) {
        Vector a(e);
        for (Index c = 0; c < e; ++c) a[c] = 0.5 + jitter(rng);
        min_a = std::min(min_a, decompose(a).aleatoric);

        Vector b(e);
        const double s = start(rng);
        for (Index c = 0; c < e; ++c) {
            if (c < e / 2) b[c] = s + (0.95 - s) * static_cast<double>(c) / static_cast<double>(e / 2);
            else b[c] = 0.95 + 0.05 * static_cast<double>(c - e / 2) / static_cast<double>(e);
        }
        max_b = std::max(max_b, decompose(b).aleatoric);
    }
    CHECK(min_a > max_b);
}

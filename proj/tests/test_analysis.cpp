#include "dataiq/analysis.hpp"
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

Matrix two_blobs(Index per_blob, double distance, double sd, std::uint64_t seed)
{
    Rng rng(seed);
    std::normal_distribution<double> gauss(0.0, sd);
    Matrix x(2 * per_blob, 2);
    for (Index i = 0; i < 2 * per_blob; ++i) {
        x(i, 0) = gauss(rng) + (i < per_blob ? 0.0 : distance);
        x(i, 1) = gauss(rng);
    }
    return x;
}

} // namespace

TEST_CASE("spearman")
{
    CHECK(spearman(vec({1, 2, 3}), vec({1, 2, 3})) == doctest::Approx(1.0));
    CHECK(spearman(vec({1, 2, 3}), vec({3, 2, 1})) == doctest::Approx(-1.0));
    CHECK(spearman(vec({1, 2, 3, 4}), vec({1, 3, 2, 4})) == doctest::Approx(0.8).epsilon(1e-14));
    CHECK(spearman(vec({1, 2, 3, 4}).array().exp(), vec({1, 3, 2, 4}).array().cube()) ==
          doctest::Approx(0.8).epsilon(1e-14));
    CHECK_THROWS_AS(spearman(vec({1, 1, 1}), vec({1, 2, 3})), NumericError);
    CHECK_THROWS_AS(spearman(vec({1, 2}), vec({1, 2, 3})), ValidationError);
}

TEST_CASE("average ranks with ties")
{
    const Vector r = average_ranks(vec({10, 20, 10, 30}));
    CHECK(r[0] == 1.5);
    CHECK(r[2] == 1.5);
    CHECK(r[1] == 3.0);
    CHECK(r[3] == 4.0);
}

TEST_CASE("robustness_matrix")
{
    SUBCASE("identical columns")
    {
        const auto s = robustness_matrix({vec({1, 5, 2}), vec({1, 5, 2}), vec({1, 5, 2})});
        CHECK(s.mean == doctest::Approx(1.0));
        CHECK(s.stddev == doctest::Approx(0.0));
    }
    SUBCASE("two columns")
    {
        const auto s = robustness_matrix({vec({1, 2, 3, 4}), vec({1, 3, 2, 4})});
        CHECK(s.mean == doctest::Approx(0.8));
        CHECK(s.stddev == 0.0);
    }
    SUBCASE("three columns with pairwise 1, 0.8, 0.8")
    {
        const auto s = robustness_matrix({vec({1, 2, 3, 4}), vec({1, 2, 3, 4}), vec({1, 3, 2, 4})});
        CHECK(s.mean == doctest::Approx(2.6 / 3.0).epsilon(1e-12));
        CHECK(std::round(s.mean * 1e4) / 1e4 == 0.8667);
        CHECK(s.matrix.rows() == 3);
        CHECK((s.matrix - s.matrix.transpose()).cwiseAbs().maxCoeff() == 0.0);
        CHECK(s.matrix.diagonal() == Vector::Ones(3));
    }
    CHECK_THROWS_AS(robustness_matrix({vec({1, 2})}), ValidationError);
}

TEST_CASE("subgroup_proportions and ranking")
{
    GroupAssignment g;
    g.groups = {Group::Easy, Group::Ambiguous, Group::Hard, Group::Ambiguous};
    const auto p = subgroup_proportions(g);
    CHECK(p[0] == 0.25);
    CHECK(p[1] == 0.5);
    CHECK(p[2] == 0.25);
    g.groups.assign(3, Group::Easy);
    CHECK(subgroup_proportions(g) == std::array<double, 3>{1, 0, 0});

    auto r = rank_datasets({{"V1", 0.63}, {"V2", 0.30}});
    CHECK(r[0].name == "V1");
    CHECK(r[0].rank == 1);
    r = rank_datasets({{"B", 0.5}, {"A", 0.5}});
    CHECK(r[0].name == "A");
    r = rank_datasets({{"V1", 0.40}, {"V2", 0.51}});
    CHECK(r[0].name == "V2");
    CHECK(r[1].rank == 2);
    CHECK_THROWS_AS(rank_datasets({{"V1", 0.40}}), ValidationError);
}

TEST_CASE("gmm single component is the sample moments")
{
    const Matrix x = two_blobs(50, 3.0, 1.0, 1);
    const auto gmm = fit_gmm(x, 1, 4);
    CHECK(gmm.weights[0] == doctest::Approx(1.0));
    const Vector mean = x.colwise().mean();
    CHECK((gmm.means.row(0).transpose() - mean).cwiseAbs().maxCoeff() < 1e-12);
    for (Index j = 0; j < 2; ++j) {
        const double var = (x.col(j).array() - mean[j]).square().mean();
        CHECK(gmm.variances(0, j) == doctest::Approx(var).epsilon(1e-10));
    }
}

TEST_CASE("gmm separates distant blobs")
{
    const Matrix x = two_blobs(100, 20.0, 1.0, 2);
    const auto gmm = fit_gmm(x, 2, 7);
    CHECK(gmm.weights.sum() == doctest::Approx(1.0).epsilon(1e-12));
    Index lo = gmm.means(0, 0) < gmm.means(1, 0) ? 0 : 1;
    CHECK(std::abs(gmm.means(lo, 0)) < 0.5);
    CHECK(std::abs(gmm.means(1 - lo, 0) - 20.0) < 0.5);
    const Matrix r = gmm.responsibilities(x);
    for (Index i = 0; i < x.rows(); ++i) CHECK(r(i, i < 100 ? lo : 1 - lo) >= 0.99);
    for (std::size_t t = 1; t < gmm.log_likelihood_trace.size(); ++t)
        CHECK(gmm.log_likelihood_trace[t] >= gmm.log_likelihood_trace[t - 1] - 1e-9);
    CHECK((gmm.variances.array() >= kVarianceFloor).all());
    CHECK_THROWS_AS(fit_gmm(x.topRows(1), 2, 1), ValidationError);
}

TEST_CASE("gmm log-likelihood is monotone on overlapping data")
{
    const Matrix x = two_blobs(150, 1.5, 1.0, 3);
    const auto gmm = fit_gmm(x, 3, 1);
    for (std::size_t t = 1; t < gmm.log_likelihood_trace.size(); ++t)
        CHECK(gmm.log_likelihood_trace[t] >= gmm.log_likelihood_trace[t - 1] - 1e-9);
}

TEST_CASE("silhouette")
{
    Matrix line(4, 1);
    line << 0, 0.1, 10, 10.1;
    IntVector lab(4);
    lab << 0, 0, 1, 1;
    CHECK(silhouette(line, lab) >= 0.97);

    Matrix dup(4, 1);
    dup << 0, 1, 0, 1;
    CHECK(silhouette(dup, lab) <= 0.0);

    Matrix three(3, 1);
    three << 0, 0.1, 5;
    IntVector single(3);
    single << 0, 0, 1;
    // the singleton adds 0 to the mean
    const double a = 0.1, b0 = 5.0, b1 = 4.9;
    const double expect = ((b0 - a) / b0 + (b1 - a) / b1) / 3.0;
    CHECK(silhouette(three, single) == doctest::Approx(expect));
    CHECK_THROWS_AS(silhouette(line, IntVector::Zero(4)), ValidationError);
}

TEST_CASE("davies_bouldin")
{
    Matrix line(4, 1);
    line << 0, 0.1, 10, 10.1;
    IntVector lab(4);
    lab << 0, 0, 1, 1;
    const double db = davies_bouldin(line, lab);
    CHECK(db <= 0.1);
    CHECK(davies_bouldin((line.array() + 123.0).matrix(), lab) == doctest::Approx(db));
    Matrix same(4, 1);
    same << 0, 1, 1, 0;
    IntVector alt(4);
    alt << 0, 0, 1, 1;
    CHECK_THROWS_AS(davies_bouldin(same, alt), NumericError);
}

TEST_CASE("cluster quality is invariant under rotation and translation")
{
    const Matrix x = two_blobs(30, 6.0, 1.0, 4);
    IntVector lab(60);
    for (Index i = 0; i < 60; ++i) lab[i] = i < 30 ? 0 : 1;
    Eigen::Matrix2d rot;
    const double th = 0.7;
    rot << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
    Matrix y = (x * rot.transpose()).rowwise() + Eigen::RowVector2d(3.0, -8.0);
    CHECK(silhouette(y, lab) == doctest::Approx(silhouette(x, lab)).epsilon(1e-12));
    CHECK(davies_bouldin(y, lab) == doctest::Approx(davies_bouldin(x, lab)).epsilon(1e-12));
}

TEST_CASE("cluster_points")
{
    SUBCASE("two far blobs")
    {
        const auto r = cluster_points(two_blobs(60, 20.0, 1.0, 5), 2, 6, 1);
        CHECK(r.best_k == 2);
        CHECK(r.silhouette >= 0.9);
        CHECK(!r.weak);
    }
    SUBCASE("one tight blob is weak")
    {
        Rng rng(6);
        std::normal_distribution<double> gauss(0.0, 1.0);
        Matrix x(120, 6);
        for (Index i = 0; i < x.size(); ++i) x.data()[i] = gauss(rng);
        const auto r = cluster_points(x, 2, 6, 1);
        CHECK(r.weak);
        CHECK(r.silhouette < 0.5);
    }
}

TEST_CASE("cluster_subgroups skips small groups")
{
    const Matrix x = two_blobs(40, 20.0, 1.0, 7);
    GroupAssignment g;
    g.groups.assign(80, Group::Easy);
    g.groups[0] = Group::Ambiguous;
    const auto rep = cluster_subgroups(x, g, 2, 4, 3);
    REQUIRE(rep.subgroups.size() == 1);
    CHECK(rep.subgroups[0].group == Group::Easy);
    CHECK(rep.subgroups[0].result.best_k == 2);
    CHECK(rep.warnings.size() == 2);
}

TEST_CASE("deferral_curve")
{
    IntVector correct(4);
    correct << 1, 1, 1, 0;
    const Vector u = vec({0.1, 0.2, 0.3, 0.9});
    const auto c = deferral_curve(u, correct, {0, 1, 2, 3}, {0.5, 1.0});
    CHECK(c.accuracy[0] == 1.0);
    CHECK(c.accuracy[1] == 0.75);
    CHECK(c.kept == std::vector<Index>{2, 4});

    const auto grid = default_deferral_grid();
    CHECK(grid.size() == 10);
    CHECK(grid.front() == doctest::Approx(0.1));
    CHECK(grid.back() == 1.0);

    IntVector mixed(6);
    mixed << 1, 0, 1, 1, 0, 1;
    const auto flat = deferral_curve(Vector::Constant(6, 0.3), mixed, {0, 2, 3, 5});
    for (double a : flat.accuracy) CHECK(a == 1.0);

    CHECK_THROWS_AS(deferral_curve(u, correct, {}), ValidationError);
}

TEST_CASE("deferral shapes")
{
    Rng rng(13);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const Index n = 20000;
    Vector u(n);
    IntVector calibrated(n), anti(n);
    for (Index i = 0; i < n; ++i) {
        u[i] = unif(rng);
        calibrated[i] = unif(rng) < 1.0 - u[i] ? 1 : 0;
        anti[i] = unif(rng) < u[i] ? 1 : 0;
    }
    std::vector<Index> all(static_cast<std::size_t>(n));
    std::iota(all.begin(), all.end(), Index{0});
    const auto cal = deferral_curve(u, calibrated, all);
    const auto bad = deferral_curve(u, anti, all);
    for (std::size_t t = 1; t < cal.accuracy.size(); ++t) {
        CHECK(cal.accuracy[t] <= cal.accuracy[t - 1]);
        CHECK(bad.accuracy[t] >= bad.accuracy[t - 1]);
    }
    double plain = 0;
    for (Index i = 0; i < n; ++i) plain += calibrated[i];
    CHECK(cal.accuracy.back() == plain / static_cast<double>(n));
}

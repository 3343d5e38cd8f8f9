#include "dataiq/data.hpp"
#include "temp_dir.hpp"

#include <doctest.h>

#include <set>

using namespace dataiq;

TEST_CASE("categorical targets map in first-appearance order")
{
    const auto ds = parse_dataset("x,y\n1,a\n2,b\n3,a\n", std::string("y"), NaPolicy::reject);
    CHECK(ds.n_classes == 2);
    CHECK(ds.labels[0] == 0);
    CHECK(ds.labels[1] == 1);
    CHECK(ds.labels[2] == 0);
    CHECK(ds.class_names == std::vector<std::string>{"a", "b"});
}

TEST_CASE("first-appearance order is not lexical")
{
    const auto ds = parse_dataset("x,y\n1,zeta\n2,alpha\n", std::string("y"), NaPolicy::reject);
    CHECK(ds.labels[0] == 0);
    CHECK(ds.class_names.front() == "zeta");
}

TEST_CASE("target column by index")
{
    const auto ds = parse_dataset("y,x\n0,1.5\n1,2.5\n", Index{0}, NaPolicy::reject);
    CHECK(ds.n_features() == 1);
    CHECK(ds.features(1, 0) == 2.5);
    CHECK(ds.feature_names == std::vector<std::string>{"x"});
}

TEST_CASE("empty cell under reject is an error")
{
    CHECK_THROWS_AS(parse_dataset("x,z,y\n1,,a\n2,3,b\n", std::string("y"), NaPolicy::reject), ValidationError);
}

TEST_CASE("non-numeric feature under reject is an error")
{
    CHECK_THROWS_AS(parse_dataset("x,y\nabc,a\n2,b\n", std::string("y"), NaPolicy::reject), ValidationError);
}

TEST_CASE("mean imputation fills the column mean of observed values")
{
    const auto ds = parse_dataset("x,z,y\n1,2,a\n2,,b\n3,7,a\n4,9,b\n", std::string("y"), NaPolicy::mean_impute);
    CHECK(ds.features(1, 1) == doctest::Approx((2.0 + 7.0 + 9.0) / 3.0).epsilon(1e-15));
    CHECK(ds.features(0, 1) == 2.0);
}

TEST_CASE("drop_rows removes incomplete rows")
{
    const auto ds = parse_dataset("x,z,y\n1,2,a\n2,NA,b\n3,7,b\n", std::string("y"), NaPolicy::drop_rows);
    CHECK(ds.size() == 2);
    CHECK(ds.features(1, 0) == 3.0);
}

TEST_CASE("single-class target is rejected")
{
    CHECK_THROWS_AS(parse_dataset("x,y\n1,a\n2,a\n", std::string("y"), NaPolicy::reject), ValidationError);
}

TEST_CASE("missing target column and missing file")
{
    CHECK_THROWS_AS(parse_dataset("x,y\n1,a\n2,b\n", std::string("label"), NaPolicy::reject), ValidationError);
    CHECK_THROWS_AS(load_dataset("/nonexistent/file.csv", std::string("y"), NaPolicy::reject), ValidationError);
}

TEST_CASE("integer targets keep numeric order")
{
    const auto ds = parse_dataset("x,y\n1,2\n2,0\n3,1\n", std::string("y"), NaPolicy::reject);
    CHECK(ds.n_classes == 3);
    CHECK(ds.labels[0] == 2);
    CHECK(ds.labels[1] == 0);
}

TEST_CASE("dataset CSV round trip")
{
    TempDir dir;
    const auto pd = generate_collision_dataset(50, 3, 0.2, 0.1, 4);
    write_dataset(dir / "d.csv", pd.data, "y");
    const auto back = load_dataset(dir / "d.csv", std::string("y"), NaPolicy::reject);
    CHECK(back.features == pd.data.features);
    CHECK(back.labels == pd.data.labels);
}

TEST_CASE("well-formed dynamics log")
{
    const std::string text =
        "example_id,checkpoint,label,p_0,p_1\n"
        "1,0,1,0.4,0.6\n0,0,0,0.9,0.1\n0,1,0,0.8,0.2\n1,1,1,0.3,0.7\n0,2,0,0.7,0.3\n1,2,1,0.2,0.8\n";
    const auto log = parse_dynamics(text);
    CHECK(log.n_checkpoints() == 3);
    CHECK(log.n_examples() == 2);
    CHECK(log.n_classes() == 2);
    CHECK(log.example_ids == std::vector<Index>{0, 1});
    CHECK(log.probs[0](1, 1) == 0.6);
    CHECK(!log.logits.has_value());
}

TEST_CASE("ragged dynamics log")
{
    const std::string text =
        "example_id,checkpoint,label,p_0,p_1\n"
        "0,0,0,0.9,0.1\n1,0,1,0.4,0.6\n0,1,0,0.8,0.2\n1,1,1,0.3,0.7\n0,2,0,0.7,0.3\n";
    try {
        parse_dynamics(text);
        FAIL("expected a ragged-log error");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("ragged") != std::string::npos);
    }
}

TEST_CASE("dynamics rows must sum to one")
{
    const std::string text = "example_id,checkpoint,label,p_0,p_1\n0,0,0,0.7,0.4\n0,1,0,0.5,0.5\n";
    CHECK_THROWS_AS(parse_dynamics(text), ValidationError);
}

TEST_CASE("a single checkpoint is rejected")
{
    CHECK_THROWS_AS(parse_dynamics("example_id,checkpoint,label,p_0,p_1\n0,0,0,0.5,0.5\n"), ValidationError);
}

TEST_CASE("dynamics with logits round trip")
{
    DynamicsLog log;
    log.example_ids = {3, 7};
    log.labels = IntVector::Map(std::vector<int>{0, 1}.data(), 2);
    for (int e = 0; e < 2; ++e) {
        Matrix p(2, 2);
        p << 0.25 + 0.1 * e, 0.75 - 0.1 * e, 0.5, 0.5;
        log.probs.push_back(p);
    }
    log.logits = std::vector<Matrix>{Matrix::Constant(2, 2, 1.5), Matrix::Constant(2, 2, -0.25)};
    const auto back = parse_dynamics(format_dynamics(log));
    CHECK(back.example_ids == log.example_ids);
    CHECK(back.probs[1] == log.probs[1]);
    REQUIRE(back.logits.has_value());
    CHECK((*back.logits)[1] == (*log.logits)[1]);
}

TEST_CASE("collision generator planted counts")
{
    SUBCASE("no collisions or noise means all Easy")
    {
        const auto pd = generate_collision_dataset(200, 4, 0.0, 0.0, 1);
        for (auto g : pd.planted) CHECK(g == Group::Easy);
    }
    SUBCASE("collision rate 0.3 of 1000")
    {
        const auto pd = generate_collision_dataset(1000, 4, 0.3, 0.05, 1);
        CHECK(std::count(pd.planted.begin(), pd.planted.end(), Group::Ambiguous) == 300);
        CHECK(std::count(pd.planted.begin(), pd.planted.end(), Group::Hard) == 50);
    }
    SUBCASE("colliding rows come in identical pairs with opposite labels")
    {
        const auto pd = generate_collision_dataset(400, 3, 0.3, 0.0, 9);
        Index paired = 0;
        for (Index i = 0; i < pd.data.size(); ++i) {
            if (pd.planted[static_cast<std::size_t>(i)] != Group::Ambiguous) continue;
            for (Index j = 0; j < pd.data.size(); ++j) {
                if (j != i && pd.data.features.row(i) == pd.data.features.row(j) &&
                    pd.data.labels[i] != pd.data.labels[j]) {
                    ++paired;
                    break;
                }
            }
        }
        CHECK(paired == 120);
    }
    SUBCASE("rates above one are rejected")
    {
        CHECK_THROWS_AS(generate_collision_dataset(100, 2, 0.7, 0.4, 1), ValidationError);
    }
}

TEST_CASE("collision generator is deterministic")
{
    const auto a = generate_collision_dataset(300, 5, 0.3, 0.05, 17);
    const auto b = generate_collision_dataset(300, 5, 0.3, 0.05, 17);
    TempDir dir;
    write_dataset(dir / "a.csv", a.data);
    write_dataset(dir / "b.csv", b.data);
    CHECK(read_file(dir / "a.csv") == read_file(dir / "b.csv"));
    CHECK(a.planted == b.planted);
}

TEST_CASE("split_dataset")
{
    Dataset ds;
    ds.features = Matrix::Zero(100, 1);
    ds.labels = IntVector(100);
    for (Index i = 0; i < 100; ++i) ds.labels[i] = static_cast<int>(i % 2);
    ds.feature_names = {"x"};
    ds.n_classes = 2;

    SUBCASE("all train")
    {
        const auto s = split_dataset(ds, {1.0, 0.0, 0.0}, 3);
        CHECK(s.train_idx.size() == 100);
        CHECK(s.val_idx.empty());
        CHECK(s.test_idx.empty());
    }
    SUBCASE("stratified 80/10/10")
    {
        const auto s = split_dataset(ds, {0.8, 0.1, 0.1}, 3);
        CHECK(s.train_idx.size() == 80);
        CHECK(s.val_idx.size() == 10);
        CHECK(s.test_idx.size() == 10);
        auto ones = [&](const std::vector<Index>& idx) {
            return std::count_if(idx.begin(), idx.end(), [&](Index i) { return ds.labels[i] == 1; });
        };
        CHECK(ones(s.train_idx) == 40);
        CHECK(ones(s.val_idx) == 5);
        CHECK(ones(s.test_idx) == 5);
        std::set<Index> all(s.train_idx.begin(), s.train_idx.end());
        all.insert(s.val_idx.begin(), s.val_idx.end());
        all.insert(s.test_idx.begin(), s.test_idx.end());
        CHECK(all.size() == 100);
    }
    SUBCASE("same seed same split")
    {
        const auto a = split_dataset(ds, {0.8, 0.1, 0.1}, 5);
        const auto b = split_dataset(ds, {0.8, 0.1, 0.1}, 5);
        CHECK(a.train_idx == b.train_idx);
        CHECK(a.test_idx == b.test_idx);
    }
    SUBCASE("class smaller than the number of parts")
    {
        Dataset tiny = ds.subset({0, 1, 2, 4});
        CHECK_THROWS_AS(split_dataset(tiny, {0.5, 0.25, 0.25}, 1), ValidationError);
    }
}

TEST_CASE("stratified_subsample")
{
    IntVector y(10);
    y << 0, 1, 0, 1, 0, 1, 0, 1, 0, 1;
    const auto all = stratified_subsample(y, 1.0, 4);
    CHECK(all.size() == 10);
    const auto half = stratified_subsample(y, 0.5, 4);
    // 2.5 rounds away from zero in each class
    CHECK(half.size() == 6);
    CHECK(std::is_sorted(half.begin(), half.end()));
    CHECK_THROWS_AS(stratified_subsample(y, 0.0, 4), ValidationError);
}

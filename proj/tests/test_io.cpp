#include <gtest/gtest.h>

#include <fstream>

#include "support.hpp"

using namespace stconfound;
using namespace testing_support;
namespace fs = std::filesystem;

namespace {

class TempDir : public ::testing::Test {
protected:
    void SetUp() override {
        dir = fs::temp_directory_path() / ("stconfound_io_" + std::to_string(::getpid()) + "_" +
                                           ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::create_directories(dir);
    }
    void TearDown() override { fs::remove_all(dir); }

    fs::path write(const std::string& name, const std::string& text) const {
        std::ofstream(dir / name) << text;
        return dir / name;
    }

    fs::path dir;
};

const char* kData =
    "area,time,observed,expected,x1\n"
    "1,2001,3,2.5,0.1\n"
    "2,2001,5,4.0,0.7\n"
    "3,2001,1,1.5,-0.3\n"
    "1,2002,4,2.6,0.2\n"
    "2,2002,6,4.1,0.9\n"
    "3,2002,0,1.4,-0.5\n";

}  // namespace

using Io = TempDir;

TEST_F(Io, EdgeListWithCommentsAndBothOrientations) {
    const auto p = write("adj.txt", "# three areas in a row\n1 2\n2 1\n\n2 3\n");
    const auto g = load_adjacency(p);
    EXPECT_EQ(g.n_areas, 3);
    EXPECT_EQ(g.edges.size(), 2u);
    EXPECT_EQ(build_spatial_precision(g), build_spatial_precision(SpatialGraph::path(3)));
    EXPECT_THROW(load_adjacency(write("bad.txt", "1 1\n1 2\n")), ValidationError);
    EXPECT_THROW(load_adjacency(write("disc.txt", "1 2\n3 4\n")), ValidationError);
    EXPECT_THROW(load_adjacency(dir / "missing.txt"), IoError);
}

TEST_F(Io, MatrixForm) {
    const auto p = write("m.txt", "# path\n0 1 0\n1 0 1\n0 1 0\n");
    EXPECT_EQ(build_spatial_precision(load_adjacency(p)), build_spatial_precision(SpatialGraph::path(3)));
    EXPECT_EQ(build_spatial_precision(load_adjacency_matrix(p)), build_spatial_precision(SpatialGraph::path(3)));
    EXPECT_THROW(load_adjacency_matrix(write("asym.txt", "0 1 0\n0 0 1\n0 1 0\n")), ValidationError);
}

TEST_F(Io, DatasetLayoutAndShuffleInvariance) {
    const auto a = load_dataset_labeled(write("d.csv", kData));
    EXPECT_EQ(a.data.areas, 3);
    EXPECT_EQ(a.data.periods, 2);
    EXPECT_EQ(a.period_labels, (std::vector<long long>{2001, 2002}));
    EXPECT_EQ(a.data.observed(Dataset::index(1, 1, 3)), 6.0);
    const auto b = load_dataset(write("s.csv",
                                      "area,time,observed,expected,x1\n"
                                      "3,2002,0,1.4,-0.5\n"
                                      "2,2001,5,4.0,0.7\n"
                                      "1,2002,4,2.6,0.2\n"
                                      "3,2001,1,1.5,-0.3\n"
                                      "1,2001,3,2.5,0.1\n"
                                      "2,2002,6,4.1,0.9\n"));
    EXPECT_EQ(a.data.observed, b.observed);
    EXPECT_EQ(a.data.expected, b.expected);
    EXPECT_EQ(a.data.covariates, b.covariates);
}

TEST_F(Io, MissingCellIsNamed) {
    std::string text = kData;
    text.erase(text.find("2,2002"), std::string("2,2002,6,4.1,0.9\n").size());
    try {
        load_dataset(write("gap.csv", text));
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("(2,2002)"), std::string::npos) << e.what();
    }
}

TEST_F(Io, NonIntegerCountsAndMissingColumnsRejected) {
    std::string text = kData;
    text.replace(text.find("1,2001,3,"), 9, "1,2001,3.5,");
    EXPECT_THROW(load_dataset(write("frac.csv", text)), ValidationError);
    EXPECT_THROW(load_dataset(write("nohead.csv", "area,time,expected\n1,1,2\n")), ValidationError);
}

TEST_F(Io, ExpectedDerivedFromPopulation) {
    const auto d = load_dataset(write("pop.csv",
                                      "area,time,observed,population\n"
                                      "1,1,2,100\n2,1,6,300\n1,2,4,100\n2,2,0,300\n"));
    EXPECT_NEAR(d.expected.sum(), d.observed.sum(), 1e-12);
    EXPECT_NEAR(d.expected(0), 100.0 * 12.0 / 800.0, 1e-12);
}

TEST_F(Io, DatasetRoundTrip) {
    Scenario sc;
    sc.grid_rows = 2;
    sc.grid_cols = 3;
    sc.periods = 3;
    const auto g = generate(sc);
    write_dataset(g.data, dir / "sim.csv");
    const auto back = load_dataset(dir / "sim.csv");
    EXPECT_EQ(back.observed, g.data.observed);
    EXPECT_LE(max_abs(back.covariates - g.data.covariates), 1e-12);
}

TEST_F(Io, FitRoundTripAndTables) {
    Scenario sc;
    sc.grid_rows = 3;
    sc.grid_cols = 2;
    sc.periods = 3;
    const auto st = ModelStructures::build(sc.spatial_graph(), sc.periods);
    const auto g = generate(sc, st);
    ModelSpec spec;
    spec.variant = Variant::ST2;
    const auto b = build_design(spec, g.data, st);
    const auto f = fit(b, g.data);
    serialize_fit(f, b, g.data, dir, "st2");
    const auto back = load_fit(dir / "st2.json");
    EXPECT_LE((back.beta - f.beta).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE(max_abs(back.beta_cov - f.beta_cov), 1e-12);
    EXPECT_LE((back.fitted_mu - f.fitted_mu).cwiseAbs().maxCoeff(), 1e-12);
    for (const auto& [k, v] : f.random_effects) EXPECT_LE((back.random_effects.at(k) - v).cwiseAbs().maxCoeff(), 1e-12);
    for (const auto& [k, v] : f.variance_components.sigma2) EXPECT_NEAR(back.variance_components.sigma2.at(k), v, 1e-12);
    EXPECT_EQ(back.converged, f.converged);
    EXPECT_EQ(back.iterations, f.iterations);
    EXPECT_NEAR(back.aic, f.aic, 1e-12);

    const auto meta = read_json(dir / "st2.json");
    EXPECT_EQ(meta["software"]["name"], "stconfound");
    EXPECT_EQ(meta["standardization"]["convention"], "sample variance, divisor N-1");

    std::ifstream coef(dir / "st2_coefficients.csv");
    std::string header, row;
    std::getline(coef, header);
    EXPECT_EQ(header, "term,Estimate,SE,q0.025,q0.975");
    std::getline(coef, row);
    const auto fields = detail::split(row, ',');
    ASSERT_EQ(fields.size(), 5u);
    const double est = std::stod(fields[1]), se = std::stod(fields[2]);
    EXPECT_NEAR(std::stod(fields[3]), est - 1.959964 * se, 1e-12);
    EXPECT_NEAR(std::stod(fields[4]), est + 1.959964 * se, 1e-12);

    std::ifstream risks(dir / "st2_risks.csv");
    int lines = 0;
    for (std::string l; std::getline(risks, l);) ++lines;
    EXPECT_EQ(lines, 1 + 18);
}

TEST_F(Io, WaldIntervalArithmetic) {
    // −0.2366 ± 1.96·0.0085
    EXPECT_NEAR(-0.2366 - wald_z * 0.0085, -0.2533, 1e-4);
    EXPECT_NEAR(-0.2366 + wald_z * 0.0085, -0.2199, 1e-4);
}

TEST_F(Io, UnwritablePathIsIoError) {
    const auto blocker = write("file", "x");
    EXPECT_THROW(write_json(json::object(), blocker / "sub" / "out.json"), IoError);
}

TEST_F(Io, ScenarioFile) {
    write("adj.txt", "1 2\n2 3\n3 4\n");
    const auto p = write("s.txt",
                         "# desk scale\n"
                         "adjacency = adj.txt\n"
                         "periods = 6\n"
                         "beta = -0.2, 0.1, 0.05\n"
                         "rho = 0.9, 0, 0\n"
                         "sigma2_spatial = 0.5  # strong\n"
                         "seed = 17\n");
    const auto sc = load_scenario(p);
    EXPECT_EQ(sc.areas(), 4);
    EXPECT_EQ(sc.periods, 6);
    EXPECT_EQ(sc.beta_true.size(), 3);
    EXPECT_DOUBLE_EQ(sc.confounding_rho(0), 0.9);
    EXPECT_DOUBLE_EQ(sc.sigma2_spatial, 0.5);
    EXPECT_EQ(sc.seed, 17u);
    EXPECT_THROW(load_scenario(write("u.txt", "colour = blue\n")), ValidationError);
    EXPECT_THROW(load_scenario(write("r.txt", "rho = 2, 0\n")), ValidationError);
}

/*
    Licensed under the Apache License, Version 2.0 (the "License");
    you may not use this file except in compliance with the License.
    You may obtain a copy of the License at

        https://www.apache.org/licenses/LICENSE-2.0

    Unless required by applicable law or agreed to in writing, software
    distributed under the License is distributed on an "AS IS" BASIS,
    WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
    See the License for the specific language governing permissions and
    limitations under the License.
*/
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "kroma/error.hpp"
#include "kroma/plants.hpp"
#include "support/oracles.hpp"

using namespace kroma;

namespace {

std::filesystem::path scratch_dir(const std::string& name)
{
    const auto dir = std::filesystem::temp_directory_path() / ("kroma_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

void write_text(const std::filesystem::path& p, const std::string& text)
{
    std::ofstream(p) << text;
}

} // namespace

// --- ODE plant ---------------------------------------------------------------

TEST_CASE("ode equilibrium")
{
    const OdePlant plant;
    CHECK(plant.step(Eigen::Vector2d::Zero(), 0.0) == Eigen::Vector2d::Zero());
}

TEST_CASE("ode step agrees with a halved substep")
{
    OdeParams coarse;
    OdeParams fine = coarse;
    fine.substeps = coarse.substeps * 2;
    const Eigen::Vector2d y(1.0, 2.0);
    const Eigen::VectorXd a = OdePlant(coarse).step(y, -1.0);
    const Eigen::VectorXd b = OdePlant(fine).step(y, -1.0);
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("first component decays in closed form regardless of control")
{
    const OdeParams params;
    const OdePlant plant(params);
    for (const double u : {-1.0, 0.0, 0.7}) {
        Eigen::VectorXd y = Eigen::Vector2d(1.3, -0.5);
        for (int n = 1; n <= 100; ++n) {
            y = plant.step(y, u);
            CHECK(std::abs(y(0) - std::exp(params.mu * n * params.h) * 1.3) < 1e-8);
        }
    }
}

TEST_CASE("ode matches its closed-form flow")
{
    const OdeParams params;
    const OdePlant plant(params);
    Eigen::VectorXd y = Eigen::Vector2d(1.0, 2.0);
    for (int n = 1; n <= 250; ++n) {
        y = plant.step(y, 0.4);
        const Eigen::Vector2d ref =
            oracle::example_flow(params.mu, params.lambda, 0.4, Eigen::Vector2d(1.0, 2.0), n * params.h);
        CHECK((y - ref).cwiseAbs().maxCoeff() < 1e-8);
    }
}

TEST_CASE("ode flow is affine in the control when chi = 1")
{
    const OdePlant plant;
    const Eigen::Vector2d y(0.8, -1.2);
    const double ua = -1.0;
    const double ub = 1.0;
    for (const double alpha : {0.0, 0.25, 0.5, 0.9}) {
        const Eigen::VectorXd mixed = plant.step(y, alpha * ua + (1 - alpha) * ub);
        const Eigen::VectorXd combo = alpha * plant.step(y, ua) + (1 - alpha) * plant.step(y, ub);
        CHECK((mixed - combo).cwiseAbs().maxCoeff() < 1e-12);
    }

    OdeParams cubic;
    cubic.chi = 3;
    const OdePlant nonlinear(cubic);
    const Eigen::VectorXd mixed = nonlinear.step(y, 0.5);
    const Eigen::VectorXd combo = 0.5 * nonlinear.step(y, 0.0) + 0.5 * nonlinear.step(y, 1.0);
    CHECK((mixed - combo).cwiseAbs().maxCoeff() > 1e-4);
}

TEST_CASE("ode rejects bad input")
{
    const OdePlant plant;
    CHECK_THROWS_AS(plant.step(Eigen::Vector2d(1, 1), std::nan("")), DataError);
    CHECK_THROWS_AS(plant.step(Eigen::Vector3d(1, 1, 1), 0.0), DataError);
    OdeParams explode;
    explode.mu = 800.0;
    explode.h = 1.0;
    CHECK_THROWS_AS(OdePlant(explode).step(Eigen::Vector2d(1e200, 0), 0.0), DataError);
    OdeParams zero_chi;
    zero_chi.chi = 0;
    CHECK_THROWS_AS(OdePlant{zero_chi}, ConfigError);
}

TEST_CASE("ode observes the full state")
{
    const OdePlant plant;
    CHECK(plant.observe(Eigen::Vector2d(1, 2)) == Eigen::Vector2d(1, 2));
}

// --- Burgers plant -------------------------------------------------------------

TEST_CASE("constant field is a steady state")
{
    const BurgersPlant plant;
    const Eigen::VectorXd y = Eigen::VectorXd::Constant(256, 0.3);
    const Eigen::VectorXd next = plant.step(y, 0.0);
    CHECK((next - y).cwiseAbs().maxCoeff() < 1e-14);
    CHECK(plant.observe(y) == Eigen::Vector4d::Constant(0.3));
}

TEST_CASE("burgers conserves the mean without control and dissipates energy")
{
    const BurgersPlant plant;
    const double l = plant.params().length;
    Eigen::VectorXd y = plant.sample([&](double x) {
        return 0.2 + 0.5 * std::sin(2 * std::numbers::pi * x / l) + 0.3 * std::cos(6 * std::numbers::pi * x / l);
    });
    for (int i = 0; i < 20; ++i) {
        const Eigen::VectorXd next = plant.step(y, 0.0);
        CHECK(std::abs(next.mean() - y.mean()) < 1e-12);
        CHECK(next.squaredNorm() <= y.squaredNorm());
        y = next;
    }
}

TEST_CASE("burgers mean changes by the integrated source")
{
    const BurgersPlant plant;
    Eigen::VectorXd y = plant.sample([](double x) { return std::exp(-(x - 1.0) * (x - 1.0) / 0.08); });
    for (const double u : {0.075, -0.025, 0.05}) {
        const Eigen::VectorXd next = plant.step(y, u);
        const double expected = plant.h() * u * plant.shape().mean();
        CHECK(std::abs((next.mean() - y.mean()) - expected) < 1e-10);
        y = next;
    }
}

TEST_CASE("burgers observation points")
{
    const BurgersPlant plant;
    const double l = plant.params().length;
    const Eigen::VectorXd y = plant.sample([&](double x) { return std::sin(2 * std::numbers::pi * x / l); });
    const Eigen::VectorXd z = plant.observe(y);
    REQUIRE(z.size() == 4);
    const double pts[4] = {0.0, 0.5, 1.0, 1.5};
    for (int i = 0; i < 4; ++i) {
        CHECK(plant.observation_offsets()[static_cast<std::size_t>(i)] == 0.0);
        CHECK(z(i) == doctest::Approx(std::sin(2 * std::numbers::pi * pts[i] / l)).epsilon(1e-12).scale(1.0));
    }

    BurgersParams odd;
    odd.n_cells = 100;
    odd.substeps = 1000;
    odd.observation_points = {0.013};
    const BurgersPlant snapped(odd);
    CHECK(snapped.observation_nodes()[0] == 1);
    CHECK(snapped.observation_offsets()[0] == doctest::Approx(0.02 - 0.013));

    BurgersParams outside;
    outside.observation_points = {2.0};
    CHECK_THROWS_AS(BurgersPlant{outside}, ConfigError);
}

TEST_CASE("burgers stability bound is checked")
{
    BurgersParams coarse;
    coarse.substeps = 50;
    try {
        BurgersPlant p(coarse);
        FAIL("expected a stability error");
    } catch (const StabilityError& e) {
        CHECK(e.admissible() > 0.0);
        CHECK(std::string(e.what()).find("bound") != std::string::npos);
    }

    const BurgersPlant plant;
    const Eigen::VectorXd wild = Eigen::VectorXd::Constant(256, 10.0);
    CHECK_THROWS_AS(plant.step(wild, 0.0), StabilityError);
}

// --- episodes, grouping, schedules ------------------------------------------------

TEST_CASE("constant control yields one snapshot set with shifted columns")
{
    const OdePlant plant;
    const EpisodeRecord rec = simulate(plant, Eigen::Vector2d(1, 2), schedule::constant(0.5, 10));
    CHECK(rec.samples() == 11);
    const auto groups = group_by_control(rec, plant.h());
    REQUIRE(groups.size() == 1);
    const SnapshotSet& s = groups.at(0.5);
    CHECK(s.pairs() == 10);
    for (Eigen::Index i = 0; i + 1 < 10; ++i)
        CHECK(s.z.col(i + 1) == s.z_next.col(i));
}

TEST_CASE("pairs are attributed to the control held during the step")
{
    const OdePlant plant;
    const auto controls = schedule::fixed_switching({{-1.0, 1}, {1.0, 1}}, 10);
    const EpisodeRecord rec = simulate(plant, Eigen::Vector2d(1, 2), controls);
    const auto groups = group_by_control(rec, plant.h());
    REQUIRE(groups.size() == 2);
    CHECK(groups.at(-1.0).pairs() == 5);
    CHECK(groups.at(1.0).pairs() == 5);
    // first pair under -1 is (z0, z1)
    CHECK(groups.at(-1.0).z.col(0) == rec.observables.col(0));
    CHECK(groups.at(-1.0).z_next.col(0) == rec.observables.col(1));
    CHECK(groups.at(1.0).z.col(0) == rec.observables.col(1));
}

TEST_CASE("burgers collection recipe pair counts")
{
    const BurgersPlant plant;
    const double l = plant.params().length;
    const std::size_t steps = static_cast<std::size_t>(60.0 / plant.h());
    REQUIRE(steps == 120);
    const auto controls = schedule::fixed_switching({{-0.025, 6}, {0.075, 6}}, steps);
    SnapshotArchive archive{4, plant.h(), {}};
    archive.episodes.push_back(simulate(
        plant, plant.sample([&](double x) { return 0.5 * std::sin(2 * std::numbers::pi * x / l); }),
        controls, 0));
    archive.episodes.push_back(simulate(
        plant, plant.sample([](double x) { return 0.6 * std::exp(-(x - 1) * (x - 1) / 0.08); }),
        controls, 1));
    const auto groups = group_by_control(archive);
    REQUIRE(groups.size() == 2);
    CHECK(groups.at(-0.025).pairs() + groups.at(0.075).pairs() == 240);
    CHECK(groups.at(-0.025).pairs() == 120);
}

TEST_CASE("simulate rejects inadmissible controls and reports the step")
{
    const OdePlant plant;
    CHECK_THROWS_AS(simulate(plant, Eigen::Vector2d(1, 2), {0.0, 2.0}), DataError);
    OdeParams wild;
    wild.mu = 800.0;
    wild.h = 1.0;
    wild.admissible = {-1, 1};
    try {
        simulate(OdePlant(wild), Eigen::Vector2d(1e200, 0), {0.0, 0.0, 0.0}, 7);
        FAIL("expected blow-up");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("episode 7, step 0") != std::string::npos);
    }
}

TEST_CASE("schedules")
{
    CHECK(schedule::constant(2.0, 3) == std::vector<double>{2, 2, 2});
    CHECK(schedule::fixed_switching({{0.0, 2}, {1.0, 1}}, 7)
          == std::vector<double>{0, 0, 1, 0, 0, 1, 0});
    const auto a = schedule::random_switching({-2, 0, 2}, 2, 5, 200, 42);
    const auto b = schedule::random_switching({-2, 0, 2}, 2, 5, 200, 42);
    CHECK(a == b);
    CHECK(a.size() == 200);
    std::size_t run = 1;
    for (std::size_t i = 1; i < a.size(); ++i) {
        CHECK((a[i] == -2 || a[i] == 0 || a[i] == 2));
        if (a[i] == a[i - 1]) {
            ++run;
        } else {
            CHECK(run >= 2);
            CHECK(run <= 5);
            run = 1;
        }
    }
    CHECK_THROWS_AS(schedule::fixed_switching({}, 3), ConfigError);
    const auto s = schedule::sinusoid(0.5, 0.5, 1.0, 0.04, 3);
    CHECK(s[2] == doctest::Approx(0.5 + 0.5 * std::sin(0.08)));
}

TEST_CASE("linear plant discretization matches RK4")
{
    Eigen::Matrix2d a;
    a << -0.3, 1.0, -1.0, -0.2;
    const LinearPlant plant(a, Eigen::Vector2d(0.5, 1.0), 0.1);
    const Eigen::Vector2d y(0.4, -0.9);
    const auto f = [&](const Eigen::VectorXd& v) {
        return Eigen::VectorXd(a * v + Eigen::Vector2d(0.5, 1.0) * 0.3);
    };
    CHECK((plant.step(y, 0.3) - oracle::rk4(f, y, 0.1, 200)).cwiseAbs().maxCoeff() < 1e-12);
}

// --- CSV archives -------------------------------------------------------------------

TEST_CASE("archive round trip")
{
    const auto dir = scratch_dir("roundtrip");
    const WakeSurrogatePlant plant;
    SnapshotArchive archive{8, plant.h(), {}};
    Eigen::VectorXd y0 = Eigen::VectorXd::Zero(8);
    y0(0) = 0.5;
    archive.episodes.push_back(
        simulate(plant, y0, schedule::random_switching({-2, 0, 2}, 2, 6, 40, 1), 0));
    archive.episodes.push_back(simulate(plant, y0, schedule::constant(2.0, 10), 1));
    write_archive(archive, dir / "wake.csv");
    CHECK(std::filesystem::exists(dir / "wake.meta.json"));

    const SnapshotArchive back = read_archive(dir / "wake.csv");
    CHECK(back.q == archive.q);
    CHECK(back.h == archive.h);
    REQUIRE(back.episodes.size() == 2);
    for (std::size_t e = 0; e < 2; ++e) {
        CHECK(back.episodes[e].id == archive.episodes[e].id);
        CHECK(back.episodes[e].times == archive.episodes[e].times);
        CHECK(back.episodes[e].controls == archive.episodes[e].controls);
        CHECK(back.episodes[e].observables == archive.episodes[e].observables);
    }
    // directory ingestion reads the same file
    CHECK(read_archive(dir).episodes.size() == 2);
}

TEST_CASE("single episode with three rows yields two pairs")
{
    const auto dir = scratch_dir("three_rows");
    write_text(dir / "a.csv", "episode,t,u,z1\n0,0,1,0.5\n0,0.1,1,0.25\n0,0.2,1,0.125\n");
    write_text(dir / "a.meta.json", R"({"q": 1, "h": 0.1})");
    const auto groups = group_by_control(read_archive(dir / "a.csv"));
    REQUIRE(groups.size() == 1);
    CHECK(groups.at(1.0).pairs() == 2);
}

TEST_CASE("pairs never span episode boundaries")
{
    const auto dir = scratch_dir("episodes");
    write_text(dir / "a.csv",
               "episode,t,u,z1\n0,0,1,1\n0,0.5,1,2\n1,0,1,10\n1,0.5,1,20\n1,1,1,30\n");
    write_text(dir / "a.meta.json", R"({"q": 1, "h": 0.5})");
    const auto groups = group_by_control(read_archive(dir / "a.csv"));
    const SnapshotSet& s = groups.at(1.0);
    CHECK(s.pairs() == 3);
    for (Eigen::Index c = 0; c < s.z.cols(); ++c)
        CHECK(s.z_next(0, c) != 10.0); // no (2 -> 10) pair
}

TEST_CASE("alternating controls in a recorded file")
{
    const auto dir = scratch_dir("alternating");
    // u held on [t_i, t_{i+1}): pairs (0->1 @0), (1->2 @2), (2->3 @0), (3->4 @2), (4->5 @0)
    write_text(dir / "a.csv", "episode,t,u,z1,z2\n"
                              "3,0,0,0,1\n3,0.25,2,1,1\n3,0.5,0,2,1\n3,0.75,2,3,1\n"
                              "3,1,0,4,1\n3,1.25,2,5,1\n");
    write_text(dir / "a.meta.json", R"({"q": 2, "h": 0.25, "control_labels": [0, 2]})");
    const SnapshotArchive archive = read_archive(dir / "a.csv");
    CHECK(archive.control_labels() == std::vector<double>{0.0, 2.0});
    const auto groups = group_by_control(archive);
    REQUIRE(groups.size() == 2);
    CHECK(groups.at(0.0).pairs() == 3);
    CHECK(groups.at(2.0).pairs() == 2);
    CHECK(groups.at(2.0).z(0, 0) == 1.0);
    CHECK(groups.at(2.0).z_next(0, 0) == 2.0);
}

TEST_CASE("malformed archives report line numbers")
{
    const auto dir = scratch_dir("malformed");
    write_text(dir / "a.meta.json", R"({"q": 1, "h": 0.5})");

    write_text(dir / "a.csv", "episode,t,u,z1\n0,0,1,1\n0,0.5,1,2\n0,1.2,1,3\n");
    try {
        read_archive(dir / "a.csv");
        FAIL("expected parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 4);
        CHECK(std::string(e.what()).find("nonuniform") != std::string::npos);
    }

    write_text(dir / "a.csv", "episode,t,u,z1\n0,0,1,1\n0,0.5,1\n");
    try {
        read_archive(dir / "a.csv");
        FAIL("expected parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 3);
    }

    write_text(dir / "a.csv", "episode,time,u,z1\n0,0,1,1\n");
    try {
        read_archive(dir / "a.csv");
        FAIL("expected parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 1);
    }

    write_text(dir / "a.csv", "episode,t,u,z1\n0,0,1,abc\n");
    CHECK_THROWS_AS(read_archive(dir / "a.csv"), ParseError);

    std::filesystem::remove(dir / "a.meta.json");
    CHECK_THROWS_AS(read_archive(dir / "a.csv"), DataError);
}

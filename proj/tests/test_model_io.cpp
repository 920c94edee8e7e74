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

#include <filesystem>
#include <random>

#include <nlohmann/json.hpp>

#include "kroma/error.hpp"
#include "kroma/model_io.hpp"
#include "support/oracles.hpp"

using namespace kroma;

namespace {

ModelBundle random_bundle(ModelKind kind, std::size_t count, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    const Dictionary dict(3, 2);
    const auto k = static_cast<Eigen::Index>(dict.size());
    ModelBundle b;
    b.kind = kind;
    for (std::size_t i = 0; i < count; ++i) {
        Eigen::MatrixXd m = oracle::random_matrix(rng, k, k, -1e3, 1e3);
        m(0, 1) = 1.0 / 3.0;
        m(1, 0) = 5e-310; // subnormal
        b.models.emplace_back(dict, m, static_cast<double>(i) * 0.1 - 0.05, 0.04, 1e-17 * (i + 1));
    }
    return b;
}

} // namespace

TEST_CASE("model kinds parse and print")
{
    for (ModelKind k : {ModelKind::koopman, ModelKind::switched, ModelKind::bilinear,
                        ModelKind::localized})
        CHECK(parse_model_kind(to_string(k)) == k);
    CHECK_THROWS_AS(parse_model_kind("spline"), ConfigError);
}

TEST_CASE("serialization round-trips bit for bit")
{
    for (ModelKind kind : {ModelKind::koopman, ModelKind::switched, ModelKind::localized}) {
        const std::size_t count = kind == ModelKind::koopman ? 1 : 3;
        const ModelBundle b = random_bundle(kind, count, 40 + count);
        const ModelBundle r = deserialize(serialize(b));
        CHECK(r.kind == kind);
        REQUIRE(r.models.size() == count);
        for (std::size_t i = 0; i < count; ++i) {
            CHECK(r.models[i].k_matrix() == b.models[i].k_matrix());
            CHECK(r.models[i].control() == b.models[i].control());
            CHECK(r.models[i].h() == b.models[i].h());
            CHECK(r.models[i].fit_residual() == b.models[i].fit_residual());
            CHECK(r.models[i].dictionary() == b.models[i].dictionary());
        }
        CHECK(serialize(r) == serialize(b));
    }
}

TEST_CASE("bundles build the composite models")
{
    ModelBundle b = random_bundle(ModelKind::localized, 3, 7);
    CHECK(b.localized().pieces().size() == 2);
    CHECK(b.switched().labels().size() == 3);
    nlohmann::json j = nlohmann::json::parse(serialize(b));
    j["kind"] = "bilinear";
    CHECK_THROWS_AS(deserialize(j.dump()), DataError);
    b.kind = ModelKind::bilinear;
    CHECK_THROWS_AS(serialize(b), DataError);
    b.models.pop_back();
    const ModelBundle r = deserialize(serialize(b));
    CHECK(r.localized().pieces().size() == 1);
}

TEST_CASE("files round-trip and write atomically")
{
    const auto dir = std::filesystem::temp_directory_path() / "kroma_test_model_io";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    const auto path = dir / "model.json";
    const ModelBundle b = random_bundle(ModelKind::switched, 2, 9);
    save_models(b, path);
    const ModelBundle r = load_models(path);
    CHECK(r.models[1].k_matrix() == b.models[1].k_matrix());
    std::size_t files = 0;
    for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir))
        ++files;
    CHECK(files == 1);
    CHECK_THROWS_AS(load_models(dir / "missing.json"), DataError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("malformed model files are rejected")
{
    const ModelBundle b = random_bundle(ModelKind::switched, 2, 11);
    const nlohmann::json good = nlohmann::json::parse(serialize(b));

    CHECK_THROWS_AS(deserialize("{not json"), DataError);
    CHECK_THROWS_AS(deserialize("[]"), DataError);

    auto mutate = [&](auto&& fn) {
        nlohmann::json j = good;
        fn(j);
        return j.dump();
    };
    CHECK_THROWS_AS(deserialize(mutate([](auto& j) { j["format"] = "other"; })), DataError);
    CHECK_THROWS_AS(deserialize(mutate([](auto& j) { j["version"] = 99; })), DataError);
    CHECK_THROWS_AS(deserialize(mutate([](auto& j) { j["dictionary"]["ordering"] = "revlex"; })),
                    DataError);
    CHECK_THROWS_AS(deserialize(mutate([](auto& j) { j["models"][0]["K"].erase(0); })), DataError);
    CHECK_THROWS_AS(deserialize(mutate([](auto& j) { j["models"] = nlohmann::json::array(); })),
                    DataError);
    CHECK_THROWS_AS(deserialize(mutate([](auto& j) { j["models"][1]["control_label"] = -1.0; })),
                    DataError);
    CHECK_THROWS_AS(deserialize(mutate([](auto& j) { j["kind"] = "spline"; })), Error);
    CHECK_THROWS_AS(deserialize(mutate([](auto& j) { j.erase("h"); })), DataError);

    ModelBundle empty;
    CHECK_THROWS_AS(serialize(empty), DataError);
}

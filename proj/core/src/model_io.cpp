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
#include "kroma/model_io.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "kroma/error.hpp"

namespace kroma {

using nlohmann::json;

std::string to_string(ModelKind kind)
{
    switch (kind) {
    case ModelKind::koopman:
        return "koopman";
    case ModelKind::switched:
        return "switched";
    case ModelKind::bilinear:
        return "bilinear";
    case ModelKind::localized:
        return "localized";
    }
    return "koopman";
}

ModelKind parse_model_kind(const std::string& text)
{
    if (text == "koopman")
        return ModelKind::koopman;
    if (text == "switched")
        return ModelKind::switched;
    if (text == "bilinear")
        return ModelKind::bilinear;
    if (text == "localized")
        return ModelKind::localized;
    throw ConfigError("unknown model kind '" + text + "'");
}

namespace {

void check_model_count(ModelKind kind, std::size_t count, const std::string& source)
{
    const bool ok = count >= 1 && (kind != ModelKind::koopman || count == 1)
                    && (kind != ModelKind::bilinear || count == 2)
                    && (kind != ModelKind::localized || count >= 2);
    if (!ok)
        throw DataError(source + ": a " + to_string(kind) + " model cannot hold "
                        + std::to_string(count) + " matrices");
}

} // namespace

SwitchedKROM ModelBundle::switched() const
{
    return SwitchedKROM(models);
}

LocalizedKROM ModelBundle::localized() const
{
    return LocalizedKROM(models);
}

std::string serialize(const ModelBundle& bundle)
{
    if (bundle.models.empty())
        throw DataError("model file: nothing to write");
    check_model_count(bundle.kind, bundle.models.size(), "model file");
    const KoopmanModel& first = bundle.models.front();
    json doc;
    doc["format"] = "kroma-model";
    doc["version"] = 1;
    doc["kind"] = to_string(bundle.kind);
    doc["dictionary"] = {{"q", first.dictionary().q()},
                         {"max_order", first.dictionary().max_order()},
                         {"ordering", std::string(Dictionary::ordering_tag)}};
    doc["h"] = first.h();
    json models = json::array();
    for (const KoopmanModel& m : bundle.models) {
        if (!(m.dictionary() == first.dictionary()) || m.h() != first.h())
            throw DataError("model file: all models must share dictionary and h");
        const Eigen::MatrixXd& k = m.k_matrix();
        std::vector<double> entries;
        entries.reserve(static_cast<std::size_t>(k.size()));
        for (Eigen::Index r = 0; r < k.rows(); ++r)
            for (Eigen::Index c = 0; c < k.cols(); ++c)
                entries.push_back(k(r, c));
        models.push_back({{"control_label", m.control()},
                          {"fit_residual", m.fit_residual()},
                          {"K", entries}});
    }
    doc["models"] = std::move(models);
    if (bundle.kind == ModelKind::bilinear || bundle.kind == ModelKind::localized) {
        json intervals = json::array();
        for (std::size_t i = 0; i + 1 < bundle.models.size(); ++i)
            intervals.push_back({bundle.models[i].control(), bundle.models[i + 1].control()});
        doc["intervals"] = std::move(intervals);
    }
    return doc.dump(1) + "\n";
}

ModelBundle deserialize(const std::string& text, const std::string& source)
{
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw DataError(source + ": malformed model file: " + e.what());
    }
    try {
        if (doc.at("format") != "kroma-model")
            throw DataError(source + ": not a model file");
        if (doc.at("version").get<int>() != 1)
            throw DataError(source + ": unsupported model file version");
        const json& d = doc.at("dictionary");
        if (d.at("ordering").get<std::string>() != Dictionary::ordering_tag)
            throw DataError(source + ": unsupported monomial ordering '"
                            + d.at("ordering").get<std::string>() + "'");
        const Dictionary dict(d.at("q").get<std::size_t>(), d.at("max_order").get<std::size_t>());
        const double h = doc.at("h").get<double>();
        const auto k = static_cast<Eigen::Index>(dict.size());

        ModelBundle bundle;
        bundle.kind = parse_model_kind(doc.at("kind").get<std::string>());
        for (const json& m : doc.at("models")) {
            const auto entries = m.at("K").get<std::vector<double>>();
            if (entries.size() != static_cast<std::size_t>(k * k))
                throw DataError(source + ": K has " + std::to_string(entries.size())
                                + " entries, expected " + std::to_string(k * k));
            Eigen::MatrixXd kmat(k, k);
            for (Eigen::Index r = 0; r < k; ++r)
                for (Eigen::Index c = 0; c < k; ++c)
                    kmat(r, c) = entries[static_cast<std::size_t>(r * k + c)];
            bundle.models.emplace_back(dict, std::move(kmat), m.at("control_label").get<double>(),
                                       h, m.at("fit_residual").get<double>());
        }
        if (bundle.models.empty())
            throw DataError(source + ": model file contains no models");
        check_model_count(bundle.kind, bundle.models.size(), source);
        for (std::size_t i = 1; i < bundle.models.size(); ++i)
            if (!(bundle.models[i].control() > bundle.models[i - 1].control()))
                throw DataError(source + ": control labels must be strictly increasing");
        if (doc.contains("intervals")) {
            const auto intervals = doc.at("intervals").get<std::vector<std::vector<double>>>();
            if (intervals.size() + 1 != bundle.models.size())
                throw DataError(source + ": interval table does not match model count");
            for (std::size_t i = 0; i < intervals.size(); ++i)
                if (intervals[i].size() != 2 || intervals[i][0] != bundle.models[i].control()
                    || intervals[i][1] != bundle.models[i + 1].control())
                    throw DataError(source + ": interval " + std::to_string(i)
                                    + " does not match the model labels");
        }
        return bundle;
    } catch (const json::exception& e) {
        throw DataError(source + ": invalid model file: " + e.what());
    }
}

void save_models(const ModelBundle& bundle, const std::filesystem::path& path)
{
    const std::string text = serialize(bundle);
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out)
            throw DataError("cannot write " + tmp.string());
        out << text;
    }
    std::filesystem::rename(tmp, path);
}

ModelBundle load_models(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw DataError("cannot open model file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return deserialize(ss.str(), path.string());
}

} // namespace kroma

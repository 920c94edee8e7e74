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
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "kroma/edmd.hpp"
#include "kroma/krom.hpp"

namespace kroma {

enum class ModelKind {
    koopman,
    switched,
    bilinear,
    localized,
};

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& text);

/**
 * Contents of a model file: the fitted Koopman matrices (one per control
 * label, ascending) and how they are meant to be combined.
 *
 * Files are JSON with a dictionary header {q, max_order, ordering}, the sample
 * step, one record per model carrying control_label, fit_residual and K in
 * row-major order, and for bilinear/localized kinds the interval table.
 * Numbers are written in shortest round-trip form, so reading back yields
 * bit-identical matrices. Exponent tables are rebuilt from the header.
 */
struct ModelBundle {
    ModelKind kind = ModelKind::koopman;
    std::vector<KoopmanModel> models;

    SwitchedKROM switched() const;
    LocalizedKROM localized() const;
};

std::string serialize(const ModelBundle& bundle);
ModelBundle deserialize(const std::string& text, const std::string& source = "<memory>");

void save_models(const ModelBundle& bundle, const std::filesystem::path& path);
ModelBundle load_models(const std::filesystem::path& path);

} // namespace kroma

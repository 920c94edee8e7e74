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
#include "kroma/cli/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "kroma/error.hpp"

namespace kroma::cli {

using json = nlohmann::ordered_json;

namespace {

// Reads fields of one JSON object, remembering which keys were consumed so
// that leftovers (typos) can be reported with their full path.
class ObjectReader {
public:
    ObjectReader(const json& node, std::string path) : node_(node), path_(std::move(path))
    {
        if (!node_.is_object())
            throw ConfigError(where() + ": expected an object");
    }

    template <class T>
    void get(const std::string& key, T& out)
    {
        if (!node_.contains(key))
            return;
        used_.insert(key);
        try {
            out = node_.at(key).get<T>();
        } catch (const json::exception&) {
            throw ConfigError(field(key) + ": wrong type");
        }
    }

    bool has(const std::string& key) const { return node_.contains(key); }

    ObjectReader child(const std::string& key)
    {
        used_.insert(key);
        return ObjectReader(node_.at(key), field(key));
    }

    const json& raw(const std::string& key)
    {
        used_.insert(key);
        return node_.at(key);
    }

    std::string field(const std::string& key) const
    {
        return path_.empty() ? key : path_ + "." + key;
    }

    void finish() const
    {
        for (const auto& item : node_.items())
            if (!used_.contains(item.key()))
                throw ConfigError(field(item.key()) + ": unknown field");
    }

private:
    std::string where() const { return path_.empty() ? "<root>" : path_; }

    const json& node_;
    std::string path_;
    std::set<std::string> used_;
};

void read_interval(ObjectReader& r, const std::string& key, ControlInterval& out)
{
    if (!r.has(key))
        return;
    std::vector<double> v;
    r.get(key, v);
    if (v.size() != 2)
        throw ConfigError(r.field(key) + ": expected [lo, hi]");
    out = {v[0], v[1]};
}

OdeParams read_ode(ObjectReader r)
{
    OdeParams p;
    r.get("mu", p.mu);
    r.get("lambda", p.lambda);
    r.get("chi", p.chi);
    r.get("h", p.h);
    r.get("substeps", p.substeps);
    read_interval(r, "admissible", p.admissible);
    r.finish();
    return p;
}

BurgersParams read_burgers(ObjectReader r)
{
    BurgersParams p;
    r.get("nu", p.nu);
    r.get("length", p.length);
    r.get("n_cells", p.n_cells);
    r.get("h", p.h);
    r.get("substeps", p.substeps);
    r.get("shape_center", p.shape_center);
    r.get("shape_width", p.shape_width);
    r.get("shape", p.shape);
    r.get("observation_points", p.observation_points);
    read_interval(r, "admissible", p.admissible);
    r.get("safety", p.safety);
    r.finish();
    return p;
}

WakeParams read_wake(ObjectReader r)
{
    WakeParams p;
    r.get("h", p.h);
    r.get("substeps", p.substeps);
    r.get("growth", p.growth);
    r.get("frequency", p.frequency);
    r.get("drag_rate", p.drag_rate);
    r.get("drag_base", p.drag_base);
    r.get("drag_gain", p.drag_gain);
    read_interval(r, "admissible", p.admissible);
    r.finish();
    return p;
}

PlantKind parse_plant_kind(const std::string& s, const std::string& path)
{
    if (s == "ode")
        return PlantKind::ode;
    if (s == "burgers")
        return PlantKind::burgers;
    if (s == "wake")
        return PlantKind::wake;
    throw ConfigError(path + ": unknown plant kind '" + s + "' (ode, burgers, wake)");
}

ScheduleKind parse_schedule(const std::string& s, const std::string& path)
{
    if (s == "constant")
        return ScheduleKind::constant;
    if (s == "fixed_switching")
        return ScheduleKind::fixed_switching;
    if (s == "random_switching")
        return ScheduleKind::random_switching;
    throw ConfigError(path + ": unknown schedule '" + s
                      + "' (constant, fixed_switching, random_switching)");
}

InitialCondition read_initial(ObjectReader r)
{
    InitialCondition ic;
    r.get("kind", ic.kind);
    r.get("values", ic.values);
    r.get("lo", ic.lo);
    r.get("hi", ic.hi);
    r.get("amplitude", ic.amplitude);
    r.finish();
    return ic;
}

std::vector<InitialCondition> read_initial_list(ObjectReader& r, const std::string& key)
{
    std::vector<InitialCondition> out;
    if (!r.has(key))
        return out;
    const json& arr = r.raw(key);
    if (!arr.is_array())
        throw ConfigError(r.field(key) + ": expected an array");
    for (std::size_t i = 0; i < arr.size(); ++i)
        out.push_back(read_initial(ObjectReader(arr[i], r.field(key) + "[" + std::to_string(i) + "]")));
    return out;
}

SignalSpec read_signal(ObjectReader r)
{
    SignalSpec s;
    r.get("name", s.name);
    r.get("kind", s.kind);
    r.get("value", s.value);
    r.get("pattern", s.pattern);
    r.get("offset", s.offset);
    r.get("amplitude", s.amplitude);
    r.get("omega", s.omega);
    r.get("path", s.path);
    r.finish();
    return s;
}

ReferenceSpec read_reference(ObjectReader r)
{
    ReferenceSpec s;
    r.get("kind", s.kind);
    r.get("value", s.value);
    r.get("offset", s.offset);
    r.get("amplitude", s.amplitude);
    r.get("omega", s.omega);
    r.finish();
    return s;
}

json emit_interval(const ControlInterval& c) { return json::array({c.lo, c.hi}); }

json emit_initial(const InitialCondition& ic)
{
    json j;
    j["kind"] = ic.kind;
    j["values"] = ic.values;
    j["lo"] = ic.lo;
    j["hi"] = ic.hi;
    j["amplitude"] = ic.amplitude;
    return j;
}

json emit_initial_list(const std::vector<InitialCondition>& list)
{
    json arr = json::array();
    for (const auto& ic : list)
        arr.push_back(emit_initial(ic));
    return arr;
}

void require(bool ok, const std::string& path, const std::string& what)
{
    if (!ok)
        throw ConfigError(path + ": " + what);
}

bool finite_positive(double v) { return std::isfinite(v) && v > 0.0; }

} // namespace

std::string to_string(PlantKind kind)
{
    switch (kind) {
    case PlantKind::ode:
        return "ode";
    case PlantKind::burgers:
        return "burgers";
    case PlantKind::wake:
        return "wake";
    }
    return "?";
}

std::string to_string(ScheduleKind kind)
{
    switch (kind) {
    case ScheduleKind::constant:
        return "constant";
    case ScheduleKind::fixed_switching:
        return "fixed_switching";
    case ScheduleKind::random_switching:
        return "random_switching";
    }
    return "?";
}

ExperimentConfig parse_config(const std::string& text)
{
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    ExperimentConfig c;
    ObjectReader root(doc, "");
    root.get("name", c.name);
    root.get("seed", c.seed);
    std::string out = c.output_dir.string();
    root.get("output_dir", out);
    c.output_dir = out;

    if (root.has("plant")) {
        ObjectReader r = root.child("plant");
        std::string kind = to_string(c.plant.kind);
        r.get("kind", kind);
        c.plant.kind = parse_plant_kind(kind, r.field("kind"));
        if (r.has("ode"))
            c.plant.ode = read_ode(r.child("ode"));
        if (r.has("burgers"))
            c.plant.burgers = read_burgers(r.child("burgers"));
        if (r.has("wake"))
            c.plant.wake = read_wake(r.child("wake"));
        r.finish();
    }
    if (root.has("dictionary")) {
        ObjectReader r = root.child("dictionary");
        r.get("q", c.dictionary.q);
        r.get("max_order", c.dictionary.max_order);
        r.finish();
    }
    if (root.has("data")) {
        ObjectReader r = root.child("data");
        DataProtocol& d = c.data;
        r.get("labels", d.labels);
        std::string schedule = to_string(d.schedule);
        r.get("schedule", schedule);
        d.schedule = parse_schedule(schedule, r.field("schedule"));
        r.get("duration", d.duration);
        r.get("episodes_per_label", d.episodes_per_label);
        d.initial_conditions = read_initial_list(r, "initial_conditions");
        r.get("hold", d.hold);
        r.get("min_hold", d.min_hold);
        r.get("max_hold", d.max_hold);
        r.get("holdout_duration", d.holdout_duration);
        d.holdout_initial_conditions = read_initial_list(r, "holdout_initial_conditions");
        r.finish();
    }
    if (root.has("model")) {
        ObjectReader r = root.child("model");
        r.get("kind", c.model.kind);
        r.get("knots", c.model.knots);
        r.get("svd_tol", c.model.svd_tol);
        r.get("ridge", c.model.ridge);
        r.get("holdout_fraction", c.model.holdout_fraction);
        r.finish();
    }
    if (root.has("predict")) {
        ObjectReader r = root.child("predict");
        r.get("duration", c.predict.duration);
        if (r.has("initial"))
            c.predict.initial = read_initial(r.child("initial"));
        if (r.has("signals")) {
            const json& arr = r.raw("signals");
            require(arr.is_array(), r.field("signals"), "expected an array");
            for (std::size_t i = 0; i < arr.size(); ++i)
                c.predict.signals.push_back(read_signal(
                    ObjectReader(arr[i], r.field("signals") + "[" + std::to_string(i) + "]")));
        }
        r.get("components", c.predict.components);
        r.finish();
    }
    if (root.has("mpc")) {
        ObjectReader r = root.child("mpc");
        MpcSpec& m = c.mpc;
        r.get("mode", m.mode);
        r.get("plant", m.plant);
        r.get("horizon", m.horizon);
        r.get("steps", m.steps);
        r.get("lo", m.lo);
        r.get("hi", m.hi);
        r.get("labels", m.labels);
        r.get("components", m.components);
        r.get("weights", m.weights);
        if (r.has("references")) {
            const json& arr = r.raw("references");
            require(arr.is_array(), r.field("references"), "expected an array");
            m.references.clear();
            for (std::size_t i = 0; i < arr.size(); ++i)
                m.references.push_back(read_reference(
                    ObjectReader(arr[i], r.field("references") + "[" + std::to_string(i) + "]")));
        }
        if (r.has("initial"))
            m.initial = read_initial(r.child("initial"));
        r.get("latency_compensation", m.latency_compensation);
        r.get("initial_control", m.initial_control);
        r.get("gtol", m.gtol);
        r.get("max_iterations", m.max_iterations);
        r.get("record_timing", m.record_timing);
        r.get("hold_on_failure", m.hold_on_failure);
        r.finish();
    }
    if (root.has("bench")) {
        ObjectReader r = root.child("bench");
        r.get("steps", c.bench.steps);
        if (r.has("initial"))
            c.bench.initial = read_initial(r.child("initial"));
        r.finish();
    }
    root.finish();
    c.validate();
    return c;
}

std::string emit_config(const ExperimentConfig& c)
{
    json doc;
    doc["name"] = c.name;
    doc["seed"] = c.seed;
    doc["output_dir"] = c.output_dir.string();

    json plant;
    plant["kind"] = to_string(c.plant.kind);
    switch (c.plant.kind) {
    case PlantKind::ode: {
        const OdeParams& p = c.plant.ode;
        plant["ode"] = {{"mu", p.mu},         {"lambda", p.lambda},
                        {"chi", p.chi},       {"h", p.h},
                        {"substeps", p.substeps}, {"admissible", emit_interval(p.admissible)}};
        break;
    }
    case PlantKind::burgers: {
        const BurgersParams& p = c.plant.burgers;
        plant["burgers"] = {{"nu", p.nu},
                            {"length", p.length},
                            {"n_cells", p.n_cells},
                            {"h", p.h},
                            {"substeps", p.substeps},
                            {"shape_center", p.shape_center},
                            {"shape_width", p.shape_width},
                            {"shape", p.shape},
                            {"observation_points", p.observation_points},
                            {"admissible", emit_interval(p.admissible)},
                            {"safety", p.safety}};
        break;
    }
    case PlantKind::wake: {
        const WakeParams& p = c.plant.wake;
        plant["wake"] = {{"h", p.h},
                         {"substeps", p.substeps},
                         {"growth", p.growth},
                         {"frequency", p.frequency},
                         {"drag_rate", p.drag_rate},
                         {"drag_base", p.drag_base},
                         {"drag_gain", p.drag_gain},
                         {"admissible", emit_interval(p.admissible)}};
        break;
    }
    }
    doc["plant"] = plant;
    doc["dictionary"] = {{"q", c.dictionary.q}, {"max_order", c.dictionary.max_order}};

    const DataProtocol& d = c.data;
    doc["data"] = {{"labels", d.labels},
                   {"schedule", to_string(d.schedule)},
                   {"duration", d.duration},
                   {"episodes_per_label", d.episodes_per_label},
                   {"initial_conditions", emit_initial_list(d.initial_conditions)},
                   {"hold", d.hold},
                   {"min_hold", d.min_hold},
                   {"max_hold", d.max_hold},
                   {"holdout_duration", d.holdout_duration},
                   {"holdout_initial_conditions", emit_initial_list(d.holdout_initial_conditions)}};

    doc["model"] = {{"kind", c.model.kind},
                    {"knots", c.model.knots},
                    {"svd_tol", c.model.svd_tol},
                    {"ridge", c.model.ridge},
                    {"holdout_fraction", c.model.holdout_fraction}};

    json signals = json::array();
    for (const SignalSpec& s : c.predict.signals)
        signals.push_back({{"name", s.name},
                           {"kind", s.kind},
                           {"value", s.value},
                           {"pattern", s.pattern},
                           {"offset", s.offset},
                           {"amplitude", s.amplitude},
                           {"omega", s.omega},
                           {"path", s.path}});
    doc["predict"] = {{"duration", c.predict.duration},
                      {"initial", emit_initial(c.predict.initial)},
                      {"signals", signals},
                      {"components", c.predict.components}};

    const MpcSpec& m = c.mpc;
    json refs = json::array();
    for (const ReferenceSpec& r : m.references)
        refs.push_back({{"kind", r.kind},
                        {"value", r.value},
                        {"offset", r.offset},
                        {"amplitude", r.amplitude},
                        {"omega", r.omega}});
    doc["mpc"] = {{"mode", m.mode},
                  {"plant", m.plant},
                  {"horizon", m.horizon},
                  {"steps", m.steps},
                  {"lo", m.lo},
                  {"hi", m.hi},
                  {"labels", m.labels},
                  {"components", m.components},
                  {"weights", m.weights},
                  {"references", refs},
                  {"initial", emit_initial(m.initial)},
                  {"latency_compensation", m.latency_compensation},
                  {"initial_control", m.initial_control},
                  {"gtol", m.gtol},
                  {"max_iterations", m.max_iterations},
                  {"record_timing", m.record_timing},
                  {"hold_on_failure", m.hold_on_failure}};
    doc["bench"] = {{"steps", c.bench.steps}, {"initial", emit_initial(c.bench.initial)}};
    return doc.dump(2) + "\n";
}

void ExperimentConfig::validate() const
{
    const std::size_t q_plant = plant.kind == PlantKind::ode       ? 2
                                : plant.kind == PlantKind::burgers ? plant.burgers.observation_points.size()
                                                                   : 8;
    require(dictionary.q == 0 || dictionary.q == q_plant, "dictionary.q",
            "must match the plant's " + std::to_string(q_plant) + " observables");
    require(dictionary.max_order >= 1, "dictionary.max_order", "must be at least 1");

    require(!data.labels.empty(), "data.labels", "at least one control label is required");
    for (std::size_t i = 1; i < data.labels.size(); ++i)
        require(data.labels[i] > data.labels[i - 1], "data.labels", "must be strictly increasing");
    require(finite_positive(data.duration), "data.duration", "must be positive");
    require(data.episodes_per_label >= 1, "data.episodes_per_label", "must be at least 1");
    require(!data.initial_conditions.empty(), "data.initial_conditions", "must not be empty");
    require(data.hold >= 1, "data.hold", "must be at least 1");
    require(data.min_hold >= 1 && data.min_hold <= data.max_hold, "data.min_hold",
            "need 1 <= min_hold <= max_hold");
    require(data.holdout_duration >= 0.0, "data.holdout_duration", "must not be negative");
    if (data.schedule == ScheduleKind::random_switching)
        require(data.labels.size() >= 2, "data.labels", "random switching needs two labels");

    require(model.kind == "switched" || model.kind == "bilinear" || model.kind == "localized",
            "model.kind", "must be switched, bilinear or localized");
    for (double k : model.knots) {
        bool found = false;
        for (double l : data.labels)
            found = found || l == k;
        require(found, "model.knots", "knot " + std::to_string(k) + " is not a data label");
    }
    require(model.svd_tol > 0.0 && model.svd_tol < 1.0, "model.svd_tol", "must lie in (0, 1)");
    require(model.ridge >= 0.0, "model.ridge", "must not be negative");
    require(model.holdout_fraction >= 0.0 && model.holdout_fraction < 1.0,
            "model.holdout_fraction", "must lie in [0, 1)");

    require(predict.duration > 0.0, "predict.duration", "must be positive");
    for (std::size_t i = 0; i < predict.signals.size(); ++i) {
        const SignalSpec& s = predict.signals[i];
        const std::string path = "predict.signals[" + std::to_string(i) + "]";
        require(!s.name.empty(), path + ".name", "must not be empty");
        require(s.kind == "constant" || s.kind == "fixed_switching" || s.kind == "sinusoid"
                    || s.kind == "replay",
                path + ".kind", "must be constant, fixed_switching, sinusoid or replay");
        if (s.kind == "fixed_switching")
            require(!s.pattern.empty(), path + ".pattern", "must not be empty");
        if (s.kind == "replay")
            require(!s.path.empty(), path + ".path", "must not be empty");
    }
    for (std::size_t comp : predict.components)
        require(comp < q_plant, "predict.components", "component out of range");

    require(mpc.mode == "continuous" || mpc.mode == "switched", "mpc.mode",
            "must be continuous or switched");
    require(mpc.plant == "plant" || mpc.plant == "model", "mpc.plant", "must be plant or model");
    require(mpc.horizon >= 1, "mpc.horizon", "must be at least 1");
    require(mpc.components.size() == mpc.weights.size(), "mpc.weights",
            "needs one weight per tracked component");
    for (std::size_t comp : mpc.components)
        require(comp < q_plant, "mpc.components", "component out of range");
    require(mpc.references.empty() || mpc.references.size() == mpc.components.size(),
            "mpc.references", "needs one reference per tracked component");
    for (const ReferenceSpec& r : mpc.references)
        require(r.kind == "constant" || r.kind == "sinusoid", "mpc.references",
                "kind must be constant or sinusoid");
    require(mpc.lo <= mpc.hi, "mpc.lo", "must not exceed mpc.hi");
    for (double l : mpc.labels) {
        bool found = false;
        for (double d : data.labels)
            found = found || l == d;
        require(found, "mpc.labels", "label " + std::to_string(l) + " is not a data label");
    }
    require(mpc.gtol > 0.0, "mpc.gtol", "must be positive");
}

std::string apply_overrides(const std::string& text, const std::vector<std::string>& overrides)
{
    if (overrides.empty())
        return text;
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    for (const std::string& item : overrides) {
        const auto eq = item.find('=');
        if (eq == std::string::npos || eq == 0)
            throw ConfigError("override '" + item + "': expected path=value");
        const std::string path = item.substr(0, eq);
        const std::string value_text = item.substr(eq + 1);
        json value;
        try {
            value = json::parse(value_text);
        } catch (const json::exception&) {
            value = value_text;
        }
        json* node = &doc;
        std::stringstream ss(path);
        std::string part;
        std::vector<std::string> parts;
        while (std::getline(ss, part, '.'))
            parts.push_back(part);
        for (std::size_t i = 0; i < parts.size(); ++i) {
            if (parts[i].empty())
                throw ConfigError("override '" + item + "': empty path segment");
            if (node->is_null())
                *node = json::object();
            if (!node->is_object())
                throw ConfigError("override '" + item + "': " + parts[i - 1] + " is not an object");
            if (i + 1 == parts.size())
                (*node)[parts[i]] = value;
            else
                node = &(*node)[parts[i]];
        }
    }
    return doc.dump();
}

ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::vector<std::string>& overrides)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open config " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(apply_overrides(buf.str(), overrides));
}

} // namespace kroma::cli

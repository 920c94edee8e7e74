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
#include "kroma/cli/commands.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <optional>
#include <sstream>

#include <nlohmann/json.hpp>

#include "kroma/error.hpp"

namespace kroma::cli {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

std::string num(double v)
{
    if (std::isnan(v))
        return "nan";
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

void write_text(const fs::path& path, const std::string& text)
{
    if (path.has_parent_path())
        fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out)
            throw DataError("cannot write " + tmp.string());
        out << text;
        if (!out)
            throw DataError("write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

std::string episode_name(std::size_t index)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "episode_%04zu.csv", index);
    return buf;
}

// Removes earlier episode_* snapshot files from dir.
void reset_dir(const fs::path& dir)
{
    if (fs::exists(dir))
        for (const auto& entry : fs::directory_iterator(dir)) {
            const std::string name = entry.path().filename().string();
            if (name.starts_with("episode_"))
                fs::remove(entry.path());
        }
    fs::create_directories(dir);
}

std::vector<double> signal_controls(const SignalSpec& s, double h, std::size_t steps)
{
    if (s.kind == "constant")
        return schedule::constant(s.value, steps);
    if (s.kind == "fixed_switching")
        return schedule::fixed_switching(s.pattern, steps);
    if (s.kind == "sinusoid")
        return schedule::sinusoid(s.offset, s.amplitude, s.omega, h, steps);
    throw ConfigError("signal " + s.name + ": kind '" + s.kind + "' has no control sequence");
}

Eigen::MatrixXd model_rollout(const ModelBundle& bundle, const Eigen::VectorXd& z0,
                              const std::vector<double>& controls)
{
    switch (bundle.kind) {
    case ModelKind::koopman:
        for (double u : controls)
            if (u != bundle.models.front().control())
                throw DataError("single Koopman model only predicts its own control label");
        return predict_observable(bundle.models.front(), z0, controls.size());
    case ModelKind::switched:
        return switched_rollout(bundle.switched(), z0, controls);
    case ModelKind::bilinear:
    case ModelKind::localized:
        return rollout(bundle.localized(), z0, controls);
    }
    throw ConfigError("unknown model kind");
}

double one_step_error_ratio(const ModelBundle& bundle, const Eigen::MatrixXd& ref,
                            const std::vector<double>& controls)
{
    const auto n = static_cast<Eigen::Index>(controls.size());
    if (n == 0)
        return 0.0;
    Eigen::MatrixXd pred(ref.rows(), n);
    for (Eigen::Index i = 0; i < n; ++i)
        pred.col(i) = model_rollout(bundle, ref.col(i), {controls[static_cast<std::size_t>(i)]}).col(1);
    const double denom = ref.rightCols(n).norm();
    const double err = (pred - ref.rightCols(n)).norm();
    return denom > 0.0 ? err / denom : err;
}

PredictRow compare(const std::string& name, const ModelBundle& bundle, const Eigen::MatrixXd& ref,
                   const Eigen::MatrixXd& model, const std::vector<double>& controls, double h,
                   const std::vector<std::size_t>& components, const fs::path& csv)
{
    PredictRow row;
    row.one_step_relative_l2 = one_step_error_ratio(bundle, ref, controls);
    row.signal = name;
    row.csv = csv;
    row.steps = controls.size();
    const double denom = ref.norm();
    row.relative_l2 = denom > 0.0 ? (ref - model).norm() / denom : (ref - model).norm();
    std::vector<RelativeErrorSeries> eps;
    for (std::size_t c : components) {
        eps.push_back(relative_error(ref, model, c));
        row.eps_max.push_back(eps.back().max);
        row.eps_mean.push_back(eps.back().mean);
    }

    const auto q = ref.rows();
    std::ostringstream out;
    out << "step,t,u";
    for (Eigen::Index i = 0; i < q; ++i)
        out << ",ref_z" << i + 1;
    for (Eigen::Index i = 0; i < q; ++i)
        out << ",krom_z" << i + 1;
    for (std::size_t c : components)
        out << ",eps_z" << c + 1;
    out << '\n';
    for (Eigen::Index j = 0; j < ref.cols(); ++j) {
        const auto ju = static_cast<std::size_t>(j);
        const double u = controls.empty() ? 0.0 : controls[std::min(ju, controls.size() - 1)];
        out << j << ',' << num(static_cast<double>(j) * h) << ',' << num(u);
        for (Eigen::Index i = 0; i < q; ++i)
            out << ',' << num(ref(i, j));
        for (Eigen::Index i = 0; i < q; ++i)
            out << ',' << num(model(i, j));
        for (const auto& e : eps)
            out << ',' << num(e.values[ju]);
        out << '\n';
    }
    write_text(csv, out.str());
    row.reference = ref;
    row.model = model;
    return row;
}

double median(std::vector<double> v)
{
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

} // namespace

std::unique_ptr<Plant> make_plant(const PlantSpec& spec)
{
    switch (spec.kind) {
    case PlantKind::ode:
        return std::make_unique<OdePlant>(spec.ode);
    case PlantKind::burgers:
        return std::make_unique<BurgersPlant>(spec.burgers);
    case PlantKind::wake:
        return std::make_unique<WakeSurrogatePlant>(spec.wake);
    }
    throw ConfigError("plant.kind: unknown plant");
}

Eigen::VectorXd initial_state(const PlantSpec& spec, const Plant& plant,
                              const InitialCondition& ic, std::mt19937_64& rng)
{
    const auto n = static_cast<Eigen::Index>(plant.state_dim());
    if (ic.kind == "state") {
        if (ic.values.size() != plant.state_dim())
            throw ConfigError("initial condition: expected " + std::to_string(plant.state_dim())
                              + " state values, got " + std::to_string(ic.values.size()));
        return Eigen::Map<const Eigen::VectorXd>(ic.values.data(), n);
    }
    if (ic.kind == "random") {
        if (!(ic.lo <= ic.hi))
            throw ConfigError("initial condition: random needs lo <= hi");
        std::uniform_real_distribution<double> d(ic.lo, ic.hi);
        Eigen::VectorXd y(n);
        for (Eigen::Index i = 0; i < n; ++i)
            y(i) = d(rng);
        return y;
    }
    if (ic.kind == "sine" || ic.kind == "gaussian") {
        const auto* burgers = dynamic_cast<const BurgersPlant*>(&plant);
        if (burgers == nullptr)
            throw ConfigError("initial condition '" + ic.kind + "' needs the burgers plant");
        const double len = spec.burgers.length;
        const double a = ic.amplitude;
        if (ic.kind == "sine")
            return burgers->sample(
                [&](double x) { return a * std::sin(2.0 * std::numbers::pi * x / len); });
        return burgers->sample([&](double x) {
            const double d = x - 0.5 * len;
            return a * std::exp(-d * d / 0.08);
        });
    }
    throw ConfigError("initial condition: unknown kind '" + ic.kind
                      + "' (state, random, sine, gaussian)");
}

std::size_t step_count(double duration, double h, const std::string& field)
{
    const double ratio = duration / h;
    const double n = std::round(ratio);
    if (!(n >= 1.0) || std::abs(ratio - n) > 1e-9 * std::max(1.0, n))
        throw ConfigError(field + ": duration " + num(duration)
                          + " is not a positive whole number of sample steps h=" + num(h));
    return static_cast<std::size_t>(n);
}

fs::path data_dir(const ExperimentConfig& config) { return config.output_dir / "data"; }
fs::path holdout_dir(const ExperimentConfig& config) { return config.output_dir / "holdout"; }
fs::path models_path(const ExperimentConfig& config) { return config.output_dir / "models.json"; }

CollectResult cmd_collect(const ExperimentConfig& config)
{
    config.validate();
    const auto plant = make_plant(config.plant);
    const DataProtocol& d = config.data;
    for (double label : d.labels)
        if (!plant->admissible().contains(label))
            throw ConfigError("data.labels: " + num(label) + " is outside the plant's admissible interval");
    const std::size_t steps = step_count(d.duration, plant->h(), "data.duration");
    std::mt19937_64 rng(config.seed);

    const std::map<std::string, std::string> meta{{"seed", std::to_string(config.seed)},
                                                  {"experiment", config.name},
                                                  {"plant", to_string(config.plant.kind)}};
    CollectResult result;
    const auto emit = [&](const fs::path& dir, std::size_t index, EpisodeRecord rec,
                          std::vector<fs::path>& files) {
        SnapshotArchive archive;
        archive.q = plant->observable_dim();
        archive.h = plant->h();
        rec.id = static_cast<long>(index);
        archive.episodes.push_back(std::move(rec));
        const fs::path csv = dir / episode_name(index);
        write_archive(archive, csv, meta);
        files.push_back(csv);
    };

    const fs::path dir = data_dir(config);
    reset_dir(dir);
    std::size_t episode = 0;
    const auto run = [&](const std::vector<double>& controls, const InitialCondition& ic) {
        const Eigen::VectorXd y0 = initial_state(config.plant, *plant, ic, rng);
        EpisodeRecord rec = simulate(*plant, y0, controls, static_cast<long>(episode));
        for (double u : controls)
            ++result.pairs_per_label[u];
        emit(dir, episode++, std::move(rec), result.files);
    };

    switch (d.schedule) {
    case ScheduleKind::constant: {
        std::size_t ic_index = 0;
        for (double label : d.labels)
            for (std::size_t e = 0; e < d.episodes_per_label; ++e)
                run(schedule::constant(label, steps),
                    d.initial_conditions[ic_index++ % d.initial_conditions.size()]);
        break;
    }
    case ScheduleKind::fixed_switching: {
        std::vector<std::pair<double, std::size_t>> pattern;
        for (double label : d.labels)
            pattern.emplace_back(label, d.hold);
        for (const InitialCondition& ic : d.initial_conditions)
            run(schedule::fixed_switching(pattern, steps), ic);
        break;
    }
    case ScheduleKind::random_switching: {
        for (const InitialCondition& ic : d.initial_conditions)
            run(schedule::random_switching(d.labels, d.min_hold, d.max_hold, steps, rng()), ic);
        break;
    }
    }

    if (d.holdout_duration > 0.0 && !d.holdout_initial_conditions.empty()) {
        const std::size_t hsteps = step_count(d.holdout_duration, plant->h(), "data.holdout_duration");
        const fs::path hdir = holdout_dir(config);
        reset_dir(hdir);
        std::size_t index = 0;
        for (double label : d.labels)
            for (const InitialCondition& ic : d.holdout_initial_conditions) {
                const Eigen::VectorXd y0 = initial_state(config.plant, *plant, ic, rng);
                emit(hdir, index, simulate(*plant, y0, schedule::constant(label, hsteps)),
                     result.holdout_files);
                ++index;
            }
    }
    return result;
}

FitResult cmd_fit(const ExperimentConfig& config, const fs::path& data)
{
    config.validate();
    const SnapshotArchive archive = read_archive(data);
    if (config.dictionary.q != 0 && config.dictionary.q != archive.q)
        throw ConfigError("dictionary.q: data has " + std::to_string(archive.q) + " observables");
    const Dictionary dict(archive.q, config.dictionary.max_order);
    const auto groups = group_by_control(archive);

    std::vector<double> wanted = config.model.knots.empty() ? config.data.labels : config.model.knots;
    FitOptions opts;
    opts.svd_tol = config.model.svd_tol;
    opts.ridge = config.model.ridge;

    FitResult result;
    result.bundle.kind = parse_model_kind(config.model.kind);
    for (double label : wanted) {
        const auto it = groups.find(label);
        if (it == groups.end())
            throw DataError("fit: no snapshot pairs recorded at control " + num(label) + " in "
                            + data.string());
        const SnapshotSet& all = it->second;
        FitRow row;
        row.label = label;
        row.k = dict.size();
        row.m = all.pairs();
        if (config.model.holdout_fraction > 0.0 && all.pairs() >= 2) {
            const auto [train, test] = split_holdout(all, config.model.holdout_fraction);
            row.heldout_error = one_step_error(fit(dict, train, opts), test);
        }
        KoopmanModel model = fit(dict, all, opts);
        row.fit_residual = model.fit_residual();
        const auto eig = spectrum(model);
        row.spectral_radius = eig.empty() ? 0.0 : std::abs(eig.front());
        result.rows.push_back(row);
        result.bundle.models.push_back(std::move(model));
    }
    if (result.bundle.kind == ModelKind::bilinear && result.bundle.models.size() != 2)
        throw ConfigError("model.knots: a bilinear model needs exactly two knots");
    if (result.bundle.kind == ModelKind::localized && result.bundle.models.size() < 2)
        throw ConfigError("model.knots: a localized model needs at least two knots");

    result.model_file = models_path(config);
    save_models(result.bundle, result.model_file);

    json report;
    report["experiment"] = config.name;
    report["data"] = data.string();
    report["kind"] = config.model.kind;
    report["ordering"] = std::string(Dictionary::ordering_tag);
    json rows = json::array();
    for (const FitRow& r : result.rows)
        rows.push_back({{"label", r.label},
                        {"k", r.k},
                        {"m", r.m},
                        {"fit_residual", r.fit_residual},
                        {"heldout_error", r.heldout_error},
                        {"spectral_radius", r.spectral_radius}});
    report["models"] = rows;
    write_text(config.output_dir / "fit_report.json", report.dump(2) + "\n");
    return result;
}

PredictResult cmd_predict(const ExperimentConfig& config, const fs::path& models)
{
    config.validate();
    const ModelBundle bundle = load_models(models);
    const auto plant = make_plant(config.plant);
    const double h = bundle.models.front().h();
    if (h != plant->h())
        throw ConfigError("plant h differs from the model's sample step");
    std::vector<std::size_t> components = config.predict.components;
    if (components.empty())
        for (std::size_t c = 0; c < plant->observable_dim(); ++c)
            components.push_back(c);

    const fs::path dir = config.output_dir / "predict";
    std::mt19937_64 rng(config.seed);
    PredictResult result;
    for (const SignalSpec& s : config.predict.signals) {
        if (s.kind == "replay") {
            const SnapshotArchive archive = read_archive(config.output_dir / s.path);
            if (archive.h != h || archive.q != bundle.models.front().dictionary().q())
                throw DataError("replay " + s.path + ": archive does not match the model layout");
            for (const EpisodeRecord& ep : archive.episodes) {
                if (ep.samples() < 2)
                    continue;
                const std::vector<double> controls(ep.controls.begin(), ep.controls.end() - 1);
                const Eigen::MatrixXd model = model_rollout(bundle, ep.observables.col(0), controls);
                const std::string name = s.name + "_" + std::to_string(ep.id);
                result.rows.push_back(compare(name, bundle, ep.observables, model, controls, h,
                                              components, dir / (name + ".csv")));
            }
            continue;
        }
        const std::size_t steps = step_count(config.predict.duration, h, "predict.duration");
        const std::vector<double> controls = signal_controls(s, h, steps);
        const Eigen::VectorXd y0 = initial_state(config.plant, *plant, config.predict.initial, rng);
        const Eigen::MatrixXd ref = simulate(*plant, y0, controls).observables;
        const Eigen::MatrixXd model = model_rollout(bundle, ref.col(0), controls);
        result.rows.push_back(
            compare(s.name, bundle, ref, model, controls, h, components, dir / (s.name + ".csv")));
    }

    json report = json::array();
    for (const PredictRow& r : result.rows) {
        json eps = json::array();
        for (std::size_t i = 0; i < components.size(); ++i)
            eps.push_back({{"component", components[i]},
                           {"max", r.eps_max[i]},
                           {"mean", r.eps_mean[i]}});
        report.push_back({{"signal", r.signal},
                          {"steps", r.steps},
                          {"relative_l2", r.relative_l2},
                          {"one_step_relative_l2", r.one_step_relative_l2},
                          {"eps_rel", eps},
                          {"csv", r.csv.filename().string()}});
    }
    write_text(dir / "report.json", report.dump(2) + "\n");
    return result;
}

MpcResult cmd_mpc(const ExperimentConfig& config, const fs::path& models)
{
    config.validate();
    const MpcSpec& spec = config.mpc;
    const ModelBundle bundle = load_models(models);
    const auto real_plant = make_plant(config.plant);
    const double h = bundle.models.front().h();

    const std::size_t rows = spec.steps + spec.horizon + 2;
    MpcProblem problem;
    problem.horizon = spec.horizon;
    problem.h = h;
    problem.cost.components = spec.components;
    problem.cost.weights = spec.weights;
    problem.cost.reference = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows),
                                                   static_cast<Eigen::Index>(spec.components.size()));
    for (std::size_t c = 0; c < spec.references.size(); ++c) {
        const ReferenceSpec& r = spec.references[c];
        problem.cost.reference.col(static_cast<Eigen::Index>(c)) =
            r.kind == "constant" ? constant_reference(r.value, rows)
                                 : sinusoid_reference(r.offset, r.amplitude, r.omega, h, rows);
    }

    std::mt19937_64 rng(config.seed);
    const Eigen::VectorXd y_real = initial_state(config.plant, *real_plant, spec.initial, rng);

    ClosedLoopOptions opts;
    opts.latency_compensation = spec.latency_compensation;
    opts.initial_control = spec.initial_control;
    opts.record_timing = spec.record_timing;
    opts.hold_on_failure = spec.hold_on_failure;
    opts.continuous.gtol = spec.gtol;
    opts.continuous.max_iterations = spec.max_iterations;

    std::unique_ptr<Plant> model_plant;
    const Plant* plant = real_plant.get();
    Eigen::VectorXd y0 = y_real;
    if (spec.plant == "model") {
        auto mp = std::make_unique<ModelPlant>(bundle.localized());
        y0 = mp->initial_state(real_plant->observe(y_real));
        model_plant = std::move(mp);
        plant = model_plant.get();
    }

    MpcResult result;
    const auto t0 = std::chrono::steady_clock::now();
    if (spec.mode == "switched") {
        std::vector<double> labels = spec.labels.empty() ? bundle.switched().labels() : spec.labels;
        std::vector<KoopmanModel> chosen;
        for (const KoopmanModel& m : bundle.models)
            if (std::find(labels.begin(), labels.end(), m.control()) != labels.end())
                chosen.push_back(m);
        if (chosen.size() != labels.size())
            throw ConfigError("mpc.labels: model file lacks some of the requested labels");
        problem.admissible = LabelSet{labels};
        if (std::find(labels.begin(), labels.end(), spec.initial_control) == labels.end())
            opts.initial_control = labels.front();
        result.record = run_closed_loop(*plant, y0, SwitchedKROM(chosen), problem, spec.steps, opts);
    } else {
        const LocalizedKROM model = bundle.localized();
        ControlBox box{spec.lo, spec.hi};
        if (spec.lo == 0.0 && spec.hi == 0.0)
            box = {model.lo(), model.hi()};
        problem.admissible = box;
        result.record = run_closed_loop(*plant, y0, model, problem, spec.steps, opts);
    }
    result.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.summary = result.record.summarize(problem);
    double terminal = 0.0;
    for (std::size_t c = 0; c < spec.components.size(); ++c)
        terminal = std::max(terminal,
                            std::abs(result.record.final_z(static_cast<Eigen::Index>(spec.components[c]))
                                     - problem.cost.target(spec.steps, c)));
    result.terminal_tracking_error = terminal;

    const fs::path dir = config.output_dir / "mpc";
    fs::create_directories(dir);
    result.csv = dir / "closed_loop.csv";
    result.record.write_csv(result.csv);
    json summary;
    summary["experiment"] = config.name;
    summary["mode"] = spec.mode;
    summary["plant"] = spec.plant;
    summary["steps"] = spec.steps;
    summary["horizon"] = spec.horizon;
    summary["mean_tracking_error"] = result.summary.mean_tracking_error;
    summary["max_tracking_error"] = result.summary.max_tracking_error;
    summary["terminal_tracking_error"] = result.terminal_tracking_error;
    summary["saturation_fraction"] = result.summary.saturation_fraction;
    summary["solver_failures"] = result.summary.solver_failures;
    summary["wall_seconds"] = result.wall_seconds;
    write_text(dir / "summary.json", summary.dump(2) + "\n");
    return result;
}

BenchResult cmd_bench(const ExperimentConfig& config, const fs::path& models)
{
    config.validate();
    if (config.bench.steps < min_bench_steps)
        throw ConfigError("bench.steps: at least " + std::to_string(min_bench_steps)
                          + " steps are required");
    const ModelBundle bundle = load_models(models);
    const auto plant = make_plant(config.plant);
    std::mt19937_64 rng(config.seed);
    Eigen::VectorXd y = initial_state(config.plant, *plant, config.bench.initial, rng);

    const std::size_t n = config.bench.steps;
    const KoopmanModel& first = bundle.models.front();
    std::optional<LocalizedKROM> model;
    if (bundle.models.size() >= 2)
        model.emplace(bundle.localized());
    const double lo = model ? model->lo() : first.control();
    const double hi = model ? model->hi() : first.control();
    const auto model_step = [&](const Eigen::VectorXd& psi, double uc) -> Eigen::VectorXd {
        if (model)
            return model->step(psi, std::clamp(uc, lo, hi));
        return first.transition() * psi;
    };
    std::vector<double> u(n);
    for (std::size_t i = 0; i < n; ++i)
        u[i] = 0.5 * (lo + hi) + 0.5 * (hi - lo) * std::sin(static_cast<double>(i) * plant->h());
    using clock = std::chrono::steady_clock;

    std::vector<double> plant_times;
    plant_times.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto t0 = clock::now();
        y = plant->step(y, std::clamp(u[i], plant->admissible().lo, plant->admissible().hi));
        plant_times.push_back(std::chrono::duration<double>(clock::now() - t0).count());
    }

    // Model steps are far below the clock resolution; time batches and divide.
    constexpr std::size_t batch = 50;
    std::vector<double> model_times;
    Eigen::VectorXd psi = first.dictionary().lift(plant->observe(y));
    const Eigen::VectorXd psi0 = psi;
    double sink = 0.0;
    for (std::size_t start = 0; start < n; start += batch) {
        const std::size_t end = std::min(n, start + batch);
        psi = psi0;
        const auto t0 = clock::now();
        for (std::size_t i = start; i < end; ++i)
            psi = model_step(psi, u[i]);
        const double dt = std::chrono::duration<double>(clock::now() - t0).count();
        sink += psi(0);
        model_times.push_back(dt / static_cast<double>(end - start));
    }
    if (!std::isfinite(sink))
        throw DataError("bench: model rollout became non-finite");

    BenchResult result;
    result.steps = n;
    result.plant_median_seconds = median(plant_times);
    result.krom_median_seconds = median(model_times);
    result.ratio = result.plant_median_seconds / result.krom_median_seconds;

    json report;
    report["experiment"] = config.name;
    report["plant"] = to_string(config.plant.kind);
    report["k"] = first.dictionary().size();
    report["steps"] = n;
    report["plant_median_seconds"] = result.plant_median_seconds;
    report["krom_median_seconds"] = result.krom_median_seconds;
    report["ratio"] = result.ratio;
    write_text(config.output_dir / "bench.json", report.dump(2) + "\n");
    return result;
}

} // namespace kroma::cli

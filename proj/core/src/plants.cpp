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
#include "kroma/plants.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>
#include <unsupported/Eigen/MatrixFunctions>

#include "kroma/error.hpp"

namespace kroma {

namespace {

// Real-axis extent of the explicit RK4 stability region.
constexpr double rk4_stability_radius = 2.785;

void require_finite(const Eigen::VectorXd& y, const char* who)
{
    if (!y.allFinite())
        throw DataError(std::string(who) + ": state became non-finite (blow-up)");
}

} // namespace

double control_power(double u, unsigned chi) noexcept
{
    double r = 1.0;
    for (unsigned i = 0; i < chi; ++i)
        r *= u;
    return r;
}

// --- OdePlant ---------------------------------------------------------------

OdePlant::OdePlant(OdeParams params) : params_(params)
{
    if (params_.chi < 1)
        throw ConfigError("ode plant: chi must be at least 1");
    if (!(params_.h > 0.0) || params_.substeps == 0)
        throw ConfigError("ode plant: h must be positive and substeps at least 1");
}

Eigen::VectorXd OdePlant::rhs(const Eigen::Ref<const Eigen::VectorXd>& y, double u) const
{
    Eigen::VectorXd d(2);
    d(0) = params_.mu * y(0);
    d(1) = params_.lambda * (y(1) - y(0) * y(0)) + control_power(u, params_.chi);
    return d;
}

Eigen::VectorXd OdePlant::step(const Eigen::Ref<const Eigen::VectorXd>& y, double u) const
{
    if (y.size() != 2)
        throw DataError("ode plant: state must have two components");
    if (!std::isfinite(u))
        throw DataError("ode plant: non-finite control");
    const double dt = params_.h / static_cast<double>(params_.substeps);
    Eigen::VectorXd s = y;
    const auto f = [&](const Eigen::VectorXd& v) { return rhs(v, u); };
    for (std::size_t i = 0; i < params_.substeps; ++i)
        s = rk4_step(f, s, dt);
    require_finite(s, "ode plant");
    return s;
}

// --- BurgersPlant -------------------------------------------------------------

BurgersPlant::BurgersPlant(BurgersParams params) : params_(std::move(params))
{
    if (params_.n_cells < 3)
        throw ConfigError("burgers plant: need at least 3 cells");
    if (!(params_.length > 0.0) || !(params_.h > 0.0) || params_.substeps == 0)
        throw ConfigError("burgers plant: length, h and substeps must be positive");
    if (!(params_.nu >= 0.0))
        throw ConfigError("burgers plant: viscosity must be non-negative");
    if (params_.observation_points.empty())
        throw ConfigError("burgers plant: at least one observation point is required");

    const auto n = static_cast<Eigen::Index>(params_.n_cells);
    dx_ = params_.length / static_cast<double>(n);
    grid_.resize(n);
    for (Eigen::Index j = 0; j < n; ++j)
        grid_(j) = static_cast<double>(j) * dx_;

    if (params_.shape.empty()) {
        const double c = params_.shape_center;
        const double s = params_.shape_width;
        shape_ = sample([&](double x) { return std::exp(-(x - c) * (x - c) / (2.0 * s * s)); });
    } else {
        if (params_.shape.size() != params_.n_cells)
            throw ConfigError("burgers plant: shape must have n_cells entries");
        shape_ = Eigen::Map<const Eigen::VectorXd>(params_.shape.data(), n);
    }

    for (const double x : params_.observation_points) {
        if (!(x >= 0.0 && x < params_.length))
            throw ConfigError("burgers plant: observation point " + std::to_string(x)
                              + " outside [0, L)");
        const auto node = static_cast<std::size_t>(std::llround(x / dx_)) % params_.n_cells;
        obs_nodes_.push_back(node);
        obs_offsets_.push_back(static_cast<double>(node) * dx_ - x);
    }

    // The diffusion part of the bound does not depend on the state.
    const double dt = substep();
    const double limit = admissible_substep(0.0);
    if (dt > limit)
        throw StabilityError("burgers plant: substep " + std::to_string(dt)
                                 + " exceeds the diffusion stability bound "
                                 + std::to_string(limit),
                             limit);
}

double BurgersPlant::admissible_substep(double max_abs) const noexcept
{
    const double rate = 4.0 * params_.nu / (dx_ * dx_) + 2.0 * max_abs / dx_;
    if (rate == 0.0)
        return std::numeric_limits<double>::infinity();
    return params_.safety * rk4_stability_radius / rate;
}

Eigen::VectorXd BurgersPlant::rhs(const Eigen::Ref<const Eigen::VectorXd>& y, double u) const
{
    const Eigen::Index n = y.size();
    const double inv_dx = 1.0 / dx_;
    const double diff = params_.nu * inv_dx * inv_dx;
    Eigen::VectorXd flux(n); // flux(j) lives at j + 1/2
    for (Eigen::Index j = 0; j < n; ++j) {
        const double a = y(j);
        const double b = y(j + 1 == n ? 0 : j + 1);
        flux(j) = (a * a + a * b + b * b) / 6.0;
    }
    Eigen::VectorXd d(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const Eigen::Index jm = j == 0 ? n - 1 : j - 1;
        const Eigen::Index jp = j + 1 == n ? 0 : j + 1;
        d(j) = diff * (y(jp) - 2.0 * y(j) + y(jm)) - inv_dx * (flux(j) - flux(jm))
               + u * shape_(j);
    }
    return d;
}

Eigen::VectorXd BurgersPlant::step(const Eigen::Ref<const Eigen::VectorXd>& y, double u) const
{
    if (static_cast<std::size_t>(y.size()) != params_.n_cells)
        throw DataError("burgers plant: state length does not match the grid");
    if (!std::isfinite(u))
        throw DataError("burgers plant: non-finite control");
    const double dt = substep();
    Eigen::VectorXd s = y;
    const auto f = [&](const Eigen::VectorXd& v) { return rhs(v, u); };
    for (std::size_t i = 0; i < params_.substeps; ++i) {
        const double limit = admissible_substep(s.cwiseAbs().maxCoeff());
        if (dt > limit)
            throw StabilityError("burgers plant: substep " + std::to_string(dt)
                                     + " violates the CFL bound " + std::to_string(limit)
                                     + " (max |y| = " + std::to_string(s.cwiseAbs().maxCoeff())
                                     + ")",
                                 limit);
        s = rk4_step(f, s, dt);
    }
    require_finite(s, "burgers plant");
    return s;
}

Eigen::VectorXd BurgersPlant::observe(const Eigen::Ref<const Eigen::VectorXd>& y) const
{
    if (static_cast<std::size_t>(y.size()) != params_.n_cells)
        throw DataError("burgers plant: state length does not match the grid");
    Eigen::VectorXd z(static_cast<Eigen::Index>(obs_nodes_.size()));
    for (std::size_t i = 0; i < obs_nodes_.size(); ++i)
        z(static_cast<Eigen::Index>(i)) = y(static_cast<Eigen::Index>(obs_nodes_[i]));
    return z;
}

// --- LinearPlant --------------------------------------------------------------

LinearPlant::LinearPlant(Eigen::MatrixXd a, Eigen::VectorXd b, double h,
                         ControlInterval admissible)
    : h_(h), admissible_(admissible)
{
    const Eigen::Index n = a.rows();
    if (a.cols() != n || b.size() != n || n == 0)
        throw ConfigError("linear plant: A must be square and b match its size");
    if (!(h > 0.0))
        throw ConfigError("linear plant: h must be positive");
    // exp([[A, b], [0, 0]] h) = [[e^{Ah}, int_0^h e^{As} ds b], [0, 1]]
    Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(n + 1, n + 1);
    aug.topLeftCorner(n, n) = a * h;
    aug.topRightCorner(n, 1) = b * h;
    const Eigen::MatrixXd e = aug.exp();
    ad_ = e.topLeftCorner(n, n);
    bd_ = e.topRightCorner(n, 1);
}

Eigen::VectorXd LinearPlant::step(const Eigen::Ref<const Eigen::VectorXd>& y, double u) const
{
    if (y.size() != ad_.rows())
        throw DataError("linear plant: state has wrong length");
    return ad_ * y + bd_ * u;
}

// --- WakeSurrogatePlant ---------------------------------------------------------

namespace {

struct WakeFilter {
    double rate;
    double lift_gain;
    double quad_gain;
};

constexpr WakeFilter wake_filters[5] = {
    {0.8, 0.9, 0.3}, {0.6, 0.4, 0.8}, {0.5, -0.5, 0.6}, {0.4, -0.7, -0.2}, {0.3, 0.2, -0.9},
};

} // namespace

WakeSurrogatePlant::WakeSurrogatePlant(WakeParams params) : params_(params)
{
    if (!(params_.h > 0.0) || params_.substeps == 0)
        throw ConfigError("wake plant: h must be positive and substeps at least 1");
}

Eigen::VectorXd WakeSurrogatePlant::rhs(const Eigen::Ref<const Eigen::VectorXd>& y, double u) const
{
    // y = (lift, drag, v1..v6); (lift, v1) is the oscillator pair.
    const double p = y(0);
    const double v = y(2);
    const double s = params_.growth;
    const double w = params_.frequency;
    Eigen::VectorXd d(8);
    d(0) = s * p - w * v + 0.1 * u;
    d(2) = w * p + s * v + 0.05 * u;
    d(1) = -params_.drag_rate * (y(1) - params_.drag_base - params_.drag_gain * (p * p + v * v))
           + 0.02 * u;
    for (int j = 0; j < 5; ++j) {
        const WakeFilter& f = wake_filters[j];
        d(3 + j) = -f.rate * y(3 + j) + f.lift_gain * p + f.quad_gain * v;
    }
    return d;
}

Eigen::VectorXd WakeSurrogatePlant::step(const Eigen::Ref<const Eigen::VectorXd>& y, double u) const
{
    if (y.size() != 8)
        throw DataError("wake plant: state must have eight components");
    const double dt = params_.h / static_cast<double>(params_.substeps);
    Eigen::VectorXd s = y;
    const auto f = [&](const Eigen::VectorXd& x) { return rhs(x, u); };
    for (std::size_t i = 0; i < params_.substeps; ++i)
        s = rk4_step(f, s, dt);
    require_finite(s, "wake plant");
    return s;
}

// --- episodes and grouping -----------------------------------------------------

std::vector<double> SnapshotArchive::control_labels() const
{
    std::set<double> labels;
    for (const EpisodeRecord& e : episodes)
        for (std::size_t i = 0; i + 1 < e.samples(); ++i)
            labels.insert(e.controls[i]);
    return {labels.begin(), labels.end()};
}

EpisodeRecord simulate(const Plant& plant, const Eigen::Ref<const Eigen::VectorXd>& y0,
                       const std::vector<double>& controls, long episode_id)
{
    const ControlInterval box = plant.admissible();
    for (std::size_t i = 0; i < controls.size(); ++i)
        if (!box.contains(controls[i]))
            throw DataError("simulate: control " + std::to_string(controls[i]) + " at step "
                            + std::to_string(i) + " is outside the admissible interval");
    const std::size_t n = controls.size() + 1;
    EpisodeRecord rec;
    rec.id = episode_id;
    rec.times.resize(n);
    rec.observables.resize(static_cast<Eigen::Index>(plant.observable_dim()),
                           static_cast<Eigen::Index>(n));
    rec.controls = controls;
    rec.controls.push_back(controls.empty() ? 0.0 : controls.back());

    Eigen::VectorXd y = y0;
    for (std::size_t i = 0; i < n; ++i) {
        rec.times[i] = static_cast<double>(i) * plant.h();
        rec.observables.col(static_cast<Eigen::Index>(i)) = plant.observe(y);
        if (i + 1 < n) {
            try {
                y = plant.step(y, controls[i]);
            } catch (const DataError& e) {
                throw DataError("episode " + std::to_string(episode_id) + ", step "
                                + std::to_string(i) + ": " + e.what());
            }
        }
    }
    return rec;
}

std::map<double, SnapshotSet> group_by_control(const EpisodeRecord& episode, double h)
{
    std::map<double, std::vector<Eigen::Index>> columns;
    for (std::size_t i = 0; i + 1 < episode.samples(); ++i)
        columns[episode.controls[i]].push_back(static_cast<Eigen::Index>(i));
    std::map<double, SnapshotSet> out;
    for (const auto& [label, idx] : columns) {
        SnapshotSet s;
        s.control = label;
        s.h = h;
        s.z.resize(episode.observables.rows(), static_cast<Eigen::Index>(idx.size()));
        s.z_next.resizeLike(s.z);
        for (std::size_t c = 0; c < idx.size(); ++c) {
            s.z.col(static_cast<Eigen::Index>(c)) = episode.observables.col(idx[c]);
            s.z_next.col(static_cast<Eigen::Index>(c)) = episode.observables.col(idx[c] + 1);
        }
        out.emplace(label, std::move(s));
    }
    return out;
}

std::map<double, SnapshotSet> group_by_control(const SnapshotArchive& archive)
{
    std::map<double, SnapshotSet> out;
    for (const EpisodeRecord& e : archive.episodes)
        for (auto& [label, set] : group_by_control(e, archive.h))
            out[label].append(set);
    return out;
}

// --- schedules -------------------------------------------------------------------

namespace schedule {

std::vector<double> constant(double u, std::size_t steps)
{
    return std::vector<double>(steps, u);
}

std::vector<double> fixed_switching(const std::vector<std::pair<double, std::size_t>>& pattern,
                                    std::size_t steps)
{
    std::size_t period = 0;
    for (const auto& seg : pattern)
        period += seg.second;
    if (pattern.empty() || period == 0)
        throw ConfigError("schedule: switching pattern must contain a positive hold");
    std::vector<double> out;
    out.reserve(steps);
    while (out.size() < steps)
        for (const auto& [u, hold] : pattern)
            for (std::size_t i = 0; i < hold && out.size() < steps; ++i)
                out.push_back(u);
    return out;
}

std::vector<double> random_switching(const std::vector<double>& labels, std::size_t min_hold,
                                     std::size_t max_hold, std::size_t steps, std::uint64_t seed)
{
    if (labels.empty() || min_hold == 0 || max_hold < min_hold)
        throw ConfigError("schedule: random switching needs labels and 1 <= min_hold <= max_hold");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> hold_dist(min_hold, max_hold);
    std::uniform_int_distribution<std::size_t> label_dist(0, labels.size() - 1);
    std::vector<double> out;
    out.reserve(steps);
    std::size_t current = label_dist(rng);
    while (out.size() < steps) {
        const std::size_t hold = hold_dist(rng);
        for (std::size_t i = 0; i < hold && out.size() < steps; ++i)
            out.push_back(labels[current]);
        if (labels.size() > 1) {
            // next label differs from the current one
            std::uniform_int_distribution<std::size_t> other(0, labels.size() - 2);
            const std::size_t pick = other(rng);
            current = pick >= current ? pick + 1 : pick;
        }
    }
    return out;
}

std::vector<double> sinusoid(double offset, double amplitude, double omega, double h,
                             std::size_t steps, double t0)
{
    std::vector<double> out(steps);
    for (std::size_t i = 0; i < steps; ++i)
        out[i] = offset + amplitude * std::sin(omega * (t0 + static_cast<double>(i) * h));
    return out;
}

} // namespace schedule

// --- CSV archive I/O ---------------------------------------------------------------

namespace {

std::string format_double(double v)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::vector<std::string_view> split_commas(std::string_view line)
{
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(',', start);
        out.push_back(line.substr(start, pos == std::string_view::npos ? line.npos : pos - start));
        if (pos == std::string_view::npos)
            break;
        start = pos + 1;
    }
    return out;
}

double parse_double(std::string_view field, const std::string& source, std::size_t line)
{
    while (!field.empty() && field.front() == ' ')
        field.remove_prefix(1);
    while (!field.empty() && (field.back() == ' ' || field.back() == '\r'))
        field.remove_suffix(1);
    double v = 0.0;
    const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
    if (res.ec != std::errc() || res.ptr != field.data() + field.size())
        throw ParseError(source, line, "not a decimal number: '" + std::string(field) + "'");
    if (!std::isfinite(v))
        throw ParseError(source, line, "non-finite value");
    return v;
}

std::string expected_header(std::size_t q)
{
    std::string h = "episode,t,u";
    for (std::size_t i = 1; i <= q; ++i)
        h += ",z" + std::to_string(i);
    return h;
}

SnapshotArchive read_one(const std::filesystem::path& csv)
{
    const std::filesystem::path meta_path = sidecar_path(csv);
    std::ifstream meta_in(meta_path);
    if (!meta_in)
        throw DataError("archive: missing metadata sidecar " + meta_path.string());
    nlohmann::json meta;
    try {
        meta_in >> meta;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("archive: malformed metadata " + meta_path.string() + ": " + e.what());
    }
    if (!meta.contains("q") || !meta.contains("h"))
        throw DataError("archive: metadata " + meta_path.string() + " must declare q and h");

    SnapshotArchive archive;
    archive.q = meta.at("q").get<std::size_t>();
    archive.h = meta.at("h").get<double>();
    if (archive.q == 0 || !(archive.h > 0.0))
        throw DataError("archive: metadata needs q >= 1 and h > 0");

    std::ifstream in(csv);
    if (!in)
        throw DataError("archive: cannot open " + csv.string());
    const std::string source = csv.string();
    std::string line;
    std::size_t lineno = 0;
    if (!std::getline(in, line))
        throw ParseError(source, 1, "empty file");
    ++lineno;
    if (!line.empty() && line.back() == '\r')
        line.pop_back();
    if (line != expected_header(archive.q))
        throw ParseError(source, lineno,
                         "unknown header '" + line + "', expected '" + expected_header(archive.q)
                             + "'");

    const std::size_t fields = 3 + archive.q;
    std::vector<std::vector<double>> columns;
    EpisodeRecord* current = nullptr;
    const auto flush = [&]() {
        if (current == nullptr)
            return;
        const auto n = static_cast<Eigen::Index>(current->times.size());
        current->observables.resize(static_cast<Eigen::Index>(archive.q), n);
        for (Eigen::Index c = 0; c < n; ++c)
            for (std::size_t r = 0; r < archive.q; ++r)
                current->observables(static_cast<Eigen::Index>(r), c) =
                    columns[static_cast<std::size_t>(c)][r];
        columns.clear();
    };

    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty())
            continue;
        const auto parts = split_commas(line);
        if (parts.size() != fields)
            throw ParseError(source, lineno,
                             "ragged row: expected " + std::to_string(fields) + " fields, got "
                                 + std::to_string(parts.size()));
        const double ep = parse_double(parts[0], source, lineno);
        if (ep != std::floor(ep))
            throw ParseError(source, lineno, "episode id must be an integer");
        const auto id = static_cast<long>(ep);
        const double t = parse_double(parts[1], source, lineno);
        const double u = parse_double(parts[2], source, lineno);

        if (current == nullptr || current->id != id) {
            if (current != nullptr && id < current->id)
                throw ParseError(source, lineno, "rows are not sorted by episode");
            for (const EpisodeRecord& e : archive.episodes)
                if (e.id == id)
                    throw ParseError(source, lineno, "episode " + std::to_string(id)
                                                         + " is not contiguous");
            flush();
            archive.episodes.push_back(EpisodeRecord{id, {}, {}, {}});
            current = &archive.episodes.back();
        } else {
            const double dt = t - current->times.back();
            if (std::abs(dt - archive.h) > 1e-9 * std::max(1.0, std::abs(t)))
                throw ParseError(source, lineno,
                                 "nonuniform timestamps: step " + format_double(dt)
                                     + " differs from h = " + format_double(archive.h));
        }
        current->times.push_back(t);
        current->controls.push_back(u);
        std::vector<double> z(archive.q);
        for (std::size_t r = 0; r < archive.q; ++r)
            z[r] = parse_double(parts[3 + r], source, lineno);
        columns.push_back(std::move(z));
    }
    flush();
    return archive;
}

} // namespace

std::filesystem::path sidecar_path(const std::filesystem::path& csv)
{
    std::filesystem::path p = csv;
    p.replace_extension(".meta.json");
    return p;
}

void write_archive(const SnapshotArchive& archive, const std::filesystem::path& csv,
                   const std::map<std::string, std::string>& extra_meta)
{
    if (csv.has_parent_path())
        std::filesystem::create_directories(csv.parent_path());
    std::ostringstream body;
    body << expected_header(archive.q) << '\n';
    for (const EpisodeRecord& e : archive.episodes) {
        if (static_cast<std::size_t>(e.observables.rows()) != archive.q
            || static_cast<std::size_t>(e.observables.cols()) != e.samples()
            || e.controls.size() != e.samples())
            throw DataError("archive: episode " + std::to_string(e.id) + " has inconsistent shape");
        for (std::size_t i = 0; i < e.samples(); ++i) {
            body << e.id << ',' << format_double(e.times[i]) << ',' << format_double(e.controls[i]);
            for (std::size_t r = 0; r < archive.q; ++r)
                body << ','
                     << format_double(
                            e.observables(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(i)));
            body << '\n';
        }
    }

    nlohmann::json meta;
    meta["q"] = archive.q;
    meta["h"] = archive.h;
    meta["control_labels"] = archive.control_labels();
    meta["episodes"] = archive.episodes.size();
    for (const auto& [k, v] : extra_meta)
        meta[k] = v;

    // write to a temporary, then rename into place
    const auto write_atomic = [](const std::filesystem::path& path, const std::string& text) {
        std::filesystem::path tmp = path;
        tmp += ".tmp";
        {
            std::ofstream out(tmp, std::ios::binary);
            if (!out)
                throw DataError("archive: cannot write " + tmp.string());
            out << text;
        }
        std::filesystem::rename(tmp, path);
    };
    write_atomic(csv, body.str());
    write_atomic(sidecar_path(csv), meta.dump(2) + "\n");
}

SnapshotArchive read_archive(const std::filesystem::path& path)
{
    if (!std::filesystem::is_directory(path))
        return read_one(path);
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(path))
        if (entry.is_regular_file() && entry.path().extension() == ".csv")
            files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    if (files.empty())
        throw DataError("archive: no CSV files in " + path.string());
    SnapshotArchive merged;
    for (const auto& f : files) {
        SnapshotArchive part = read_one(f);
        if (merged.q == 0) {
            merged.q = part.q;
            merged.h = part.h;
        } else if (part.q != merged.q || part.h != merged.h) {
            throw DataError("archive: " + f.string() + " disagrees with earlier files on q or h");
        }
        for (auto& e : part.episodes) {
            for (const auto& existing : merged.episodes)
                if (existing.id == e.id)
                    throw DataError("archive: episode id " + std::to_string(e.id)
                                    + " appears in more than one file");
            merged.episodes.push_back(std::move(e));
        }
    }
    return merged;
}

} // namespace kroma

#pragma once

// Scenario configuration: sectioned key/value text files, strict validation
// (unknown keys are errors), canonical serialization, and the three built-in
// example presets.

#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "evac/core.hpp"
#include "evac/mesh.hpp"
#include "evac/model.hpp"

namespace evac {

// Configuration problems exit with a dedicated code in the CLI.
struct ConfigError : Error {
    using Error::Error;
};

struct GaussianBell {
    double cx = 0.0, cy = 0.0, variance = 0.1, amplitude = 0.5;
};

struct ObservationSpec {
    bool all = true;
    double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;
};

struct OptimizerConfig {
    int max_iterations = 40;
    double stationarity_tol = 1e-3;
    double initial_step = 1.0;
    double armijo_decrease = 1e-4;
};

struct ScenarioConfig {
    // Geometry: either a generated rectangle or an external mesh file.
    bool use_mesh_file = false;
    std::string mesh_file;
    RoomSpec room;

    ModelParams params;
    double horizon = 1.0;
    int steps = 100;

    std::vector<Vec2> agent_positions;
    std::vector<Vec2> initial_u;     // length 1 (broadcast) or one per agent
    std::vector<double> initial_c;   // likewise

    std::vector<GaussianBell> bells;
    ObservationSpec observation;
    OptimizerConfig optimizer;

    bool allow_cfl_violation = false;
    int snapshot_stride = 10;

    double tau() const { return horizon / steps; }
};

namespace detail {

struct RawConfig {
    // section -> key -> (value, line).
    std::map<std::string, std::map<std::string, std::pair<std::string, int>>> data;
};

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

inline RawConfig parse_raw(std::istream& is, const std::string& name) {
    RawConfig raw;
    std::string line, section;
    int lineno = 0;
    while (std::getline(is, line)) {
        lineno++;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError(concat(name, ":", lineno, ": malformed section header '", line, "'"));
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty())
                throw ConfigError(concat(name, ":", lineno, ": empty section name"));
            raw.data[section];
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(concat(name, ":", lineno, ":", 1, ": expected 'key = value', got '", line, "'"));
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw ConfigError(concat(name, ":", lineno, ": empty key"));
        if (section.empty())
            throw ConfigError(concat(name, ":", lineno, ": key '", key, "' outside any section"));
        if (!raw.data[section].insert({key, {value, lineno}}).second)
            throw ConfigError(concat(name, ":", lineno, ": duplicate key '", key, "' in [", section, "]"));
    }
    return raw;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::string cur;
    for (char ch : s) {
        if (ch == sep) {
            parts.push_back(trim(cur));
            cur.clear();
        } else {
            cur += ch;
        }
    }
    parts.push_back(trim(cur));
    return parts;
}

class ConfigReader {
public:
    ConfigReader(RawConfig raw, std::string name) : raw_(std::move(raw)), name_(std::move(name)) {}

    bool has(const std::string& section, const std::string& key) {
        const auto s = raw_.data.find(section);
        return s != raw_.data.end() && s->second.count(key);
    }

    std::optional<std::string> take(const std::string& section, const std::string& key) {
        const auto s = raw_.data.find(section);
        if (s == raw_.data.end()) return std::nullopt;
        const auto k = s->second.find(key);
        if (k == s->second.end()) return std::nullopt;
        std::string value = k->second.first;
        s->second.erase(k);
        return value;
    }

    double take_double(const std::string& section, const std::string& key, double fallback) {
        const auto v = take(section, key);
        if (!v) return fallback;
        return parse_double(*v, section, key);
    }

    int take_int(const std::string& section, const std::string& key, int fallback) {
        const auto v = take(section, key);
        if (!v) return fallback;
        std::size_t pos = 0;
        int out = 0;
        try {
            out = std::stoi(*v, &pos);
        } catch (...) {
            bad_value(section, key, *v, "an integer");
        }
        if (pos != v->size()) bad_value(section, key, *v, "an integer");
        return out;
    }

    bool take_bool(const std::string& section, const std::string& key, bool fallback) {
        const auto v = take(section, key);
        if (!v) return fallback;
        if (*v == "true" || *v == "1") return true;
        if (*v == "false" || *v == "0") return false;
        bad_value(section, key, *v, "true or false");
    }

    double parse_double(const std::string& v, const std::string& section, const std::string& key) {
        std::size_t pos = 0;
        double out = 0.0;
        try {
            out = std::stod(v, &pos);
        } catch (...) {
            bad_value(section, key, v, "a number");
        }
        if (pos != v.size()) bad_value(section, key, v, "a number");
        return out;
    }

    [[noreturn]] void bad_value(const std::string& section, const std::string& key,
                                const std::string& v, const std::string& expected) {
        throw ConfigError(concat(name_, ": [", section, "] ", key, ": expected ", expected,
                                 ", got '", v, "'"));
    }

    // Colon-separated numeric tuples in a comma-separated list.
    std::vector<std::vector<double>> take_tuples(const std::string& section, const std::string& key,
                                                 std::size_t arity) {
        const auto v = take(section, key);
        std::vector<std::vector<double>> out;
        if (!v || v->empty()) return out;
        for (const std::string& item : split(*v, ',')) {
            if (item.empty()) continue;
            const auto fields = split(item, ':');
            if (fields.size() != arity)
                throw ConfigError(concat(name_, ": [", section, "] ", key, ": entry '", item,
                                         "' must have ", arity, " colon-separated fields"));
            std::vector<double> tuple;
            for (const auto& f : fields) tuple.push_back(parse_double(f, section, key));
            out.push_back(std::move(tuple));
        }
        return out;
    }

    void reject_leftovers() const {
        for (const auto& [section, keys] : raw_.data)
            for (const auto& [key, value] : keys)
                throw ConfigError(concat(name_, ":", value.second, ": unknown key '", key,
                                         "' in section [", section, "]"));
    }

    const std::string& name() const { return name_; }

private:
    RawConfig raw_;
    std::string name_;
};

inline ExitInterval::Side parse_side(const std::string& s, const std::string& name) {
    if (s == "south") return ExitInterval::South;
    if (s == "east") return ExitInterval::East;
    if (s == "north") return ExitInterval::North;
    if (s == "west") return ExitInterval::West;
    throw ConfigError(concat(name, ": unknown exit side '", s, "' (south|east|north|west)"));
}

} // namespace detail

inline ScenarioConfig parse_config(std::istream& is, const std::string& name) {
    detail::ConfigReader r(detail::parse_raw(is, name), name);
    ScenarioConfig cfg;

    // Required sections first, so an empty file reports what is missing.
    if (!r.has("geometry", "kind") && !r.has("geometry", "mesh_file"))
        throw ConfigError(concat(name, ": missing required fields: [geometry] kind (or mesh_file), ",
                                 "[time] horizon, [time] steps"));

    const std::string kind = r.take("geometry", "kind").value_or("rectangle");
    if (kind == "file" || r.has("geometry", "mesh_file")) {
        cfg.use_mesh_file = true;
        const auto f = r.take("geometry", "mesh_file");
        if (!f) throw ConfigError(concat(name, ": [geometry] kind = file requires mesh_file"));
        cfg.mesh_file = *f;
    } else if (kind == "rectangle") {
        cfg.room.x0 = r.take_double("geometry", "x0", 0.0);
        cfg.room.y0 = r.take_double("geometry", "y0", 0.0);
        cfg.room.x1 = r.take_double("geometry", "x1", 1.0);
        cfg.room.y1 = r.take_double("geometry", "y1", 1.0);
        cfg.room.target_edge = r.take_double("geometry", "target_edge", 0.1);
        if (const auto exits = r.take("geometry", "exits")) {
            for (const std::string& item : detail::split(*exits, ',')) {
                if (item.empty()) continue;
                const auto f = detail::split(item, ':');
                if (f.size() != 3)
                    throw ConfigError(concat(name, ": [geometry] exits entry '", item,
                                             "' must be side:lo:hi"));
                ExitInterval e;
                e.side = detail::parse_side(f[0], name);
                e.lo = r.parse_double(f[1], "geometry", "exits");
                e.hi = r.parse_double(f[2], "geometry", "exits");
                cfg.room.exits.push_back(e);
            }
        }
        for (const auto& w : r.take_tuples("geometry", "walls", 4))
            cfg.room.walls.push_back({w[0], w[1], w[2], w[3]});
    } else {
        throw ConfigError(concat(name, ": [geometry] kind must be rectangle or file, got '", kind, "'"));
    }

    if (!r.has("time", "horizon") || !r.has("time", "steps"))
        throw ConfigError(concat(name, ": missing required fields: [time] horizon, [time] steps"));
    cfg.horizon = r.take_double("time", "horizon", 0.0);
    cfg.steps = r.take_int("time", "steps", 0);
    if (!(cfg.horizon > 0.0)) throw ConfigError(concat(name, ": [time] horizon must be positive"));
    if (cfg.steps < 1) throw ConfigError(concat(name, ": [time] steps must be >= 1"));

    ModelParams& mp = cfg.params;
    mp.eps = r.take_double("model", "eps", mp.eps);
    mp.delta1 = r.take_double("model", "delta1", mp.delta1);
    mp.delta2 = r.take_double("model", "delta2", mp.delta2);
    mp.delta4 = r.take_double("model", "delta4", mp.delta4);
    mp.gamma = r.take_double("model", "gamma", mp.gamma);
    mp.v0 = r.take_double("model", "v0", mp.v0);
    mp.nu = r.take_double("model", "nu", mp.nu);
    mp.mu = r.take_double("model", "mu", mp.mu);
    mp.alpha1 = r.take_double("model", "alpha1", mp.alpha1);
    mp.alpha2 = r.take_double("model", "alpha2", mp.alpha2);
    mp.zeta = r.take_double("model", "zeta", mp.zeta);
    mp.eta = r.take_double("model", "eta", mp.eta);
    mp.h_smooth = r.take_double("model", "h_smooth", mp.h_smooth);
    if (const auto k = r.take("model", "kernel")) {
        const auto f = detail::split(*k, ':');
        if (f[0] == "bump" && f.size() == 2) {
            mp.kernel.kind = KernelSpec::Bump;
            mp.kernel.R = r.parse_double(f[1], "model", "kernel");
        } else if (f[0] == "morse" && f.size() == 3) {
            mp.kernel.kind = KernelSpec::Morse;
            mp.kernel.a = r.parse_double(f[1], "model", "kernel");
            mp.kernel.r_a = r.parse_double(f[2], "model", "kernel");
        } else {
            throw ConfigError(concat(name, ": [model] kernel must be bump:R or morse:a:r_a, got '", *k, "'"));
        }
    }
    try {
        mp.validate();
    } catch (const Error& e) {
        throw ConfigError(concat(name, ": ", e.what()));
    }

    for (const auto& p : r.take_tuples("agents", "positions", 2))
        cfg.agent_positions.push_back({p[0], p[1]});
    for (const auto& u : r.take_tuples("agents", "u0", 2))
        cfg.initial_u.push_back({u[0], u[1]});
    if (const auto c = r.take("agents", "c0")) {
        for (const std::string& item : detail::split(*c, ','))
            if (!item.empty()) cfg.initial_c.push_back(r.parse_double(item, "agents", "c0"));
    }
    const std::size_t M = cfg.agent_positions.size();
    auto check_broadcast = [&](std::size_t n, const char* what) {
        if (n != 0 && n != 1 && n != M)
            throw ConfigError(concat(name, ": [agents] ", what, " must have 1 or ", M, " entries, got ", n));
    };
    check_broadcast(cfg.initial_u.size(), "u0");
    check_broadcast(cfg.initial_c.size(), "c0");
    for (const auto& u : cfg.initial_u)
        if (u.norm() > 1.0 + 1e-12)
            throw ConfigError(concat(name, ": [agents] u0 entry exceeds the unit bound"));
    for (double c : cfg.initial_c)
        if (c < 0.0 || c > 1.0)
            throw ConfigError(concat(name, ": [agents] c0 entry outside [0,1]"));

    for (const auto& b : r.take_tuples("density", "bells", 4)) {
        if (!(b[2] > 0.0))
            throw ConfigError(concat(name, ": [density] bells variance must be positive"));
        cfg.bells.push_back({b[0], b[1], b[2], b[3]});
    }

    if (const auto obs = r.take("observation", "region")) {
        if (*obs == "all") {
            cfg.observation.all = true;
        } else {
            const auto f = detail::split(*obs, ':');
            if (f.size() != 4)
                throw ConfigError(concat(name, ": [observation] region must be 'all' or x0:y0:x1:y1"));
            cfg.observation.all = false;
            cfg.observation.x0 = r.parse_double(f[0], "observation", "region");
            cfg.observation.y0 = r.parse_double(f[1], "observation", "region");
            cfg.observation.x1 = r.parse_double(f[2], "observation", "region");
            cfg.observation.y1 = r.parse_double(f[3], "observation", "region");
        }
    }

    cfg.optimizer.max_iterations = r.take_int("optimizer", "max_iterations", cfg.optimizer.max_iterations);
    cfg.optimizer.stationarity_tol = r.take_double("optimizer", "stationarity_tol", cfg.optimizer.stationarity_tol);
    cfg.optimizer.initial_step = r.take_double("optimizer", "initial_step", cfg.optimizer.initial_step);
    cfg.optimizer.armijo_decrease = r.take_double("optimizer", "armijo_decrease", cfg.optimizer.armijo_decrease);
    if (cfg.optimizer.max_iterations < 0)
        throw ConfigError(concat(name, ": [optimizer] max_iterations must be >= 0"));

    cfg.allow_cfl_violation = r.take_bool("run", "allow_cfl_violation", false);
    cfg.snapshot_stride = r.take_int("output", "snapshot_stride", cfg.snapshot_stride);
    if (cfg.snapshot_stride < 1)
        throw ConfigError(concat(name, ": [output] snapshot_stride must be >= 1"));

    r.reject_leftovers();
    return cfg;
}

inline std::string serialize_config(const ScenarioConfig& cfg) {
    std::ostringstream os;
    char buf[256];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return std::string(buf);
    };
    os << "[geometry]\n";
    if (cfg.use_mesh_file) {
        os << "kind = file\nmesh_file = " << cfg.mesh_file << "\n";
    } else {
        os << "kind = rectangle\n";
        os << "x0 = " << num(cfg.room.x0) << "\ny0 = " << num(cfg.room.y0) << "\n";
        os << "x1 = " << num(cfg.room.x1) << "\ny1 = " << num(cfg.room.y1) << "\n";
        os << "target_edge = " << num(cfg.room.target_edge) << "\n";
        if (!cfg.room.exits.empty()) {
            os << "exits = ";
            for (std::size_t i = 0; i < cfg.room.exits.size(); ++i) {
                const auto& e = cfg.room.exits[i];
                os << (i ? ", " : "") << side_name(e.side) << ":" << num(e.lo) << ":" << num(e.hi);
            }
            os << "\n";
        }
        if (!cfg.room.walls.empty()) {
            os << "walls = ";
            for (std::size_t i = 0; i < cfg.room.walls.size(); ++i) {
                const auto& w = cfg.room.walls[i];
                os << (i ? ", " : "") << num(w.x0) << ":" << num(w.y0) << ":" << num(w.x1) << ":" << num(w.y1);
            }
            os << "\n";
        }
    }
    os << "\n[time]\nhorizon = " << num(cfg.horizon) << "\nsteps = " << cfg.steps << "\n";
    const ModelParams& mp = cfg.params;
    os << "\n[model]\n";
    os << "eps = " << num(mp.eps) << "\ndelta1 = " << num(mp.delta1) << "\ndelta2 = " << num(mp.delta2)
       << "\ndelta4 = " << num(mp.delta4) << "\ngamma = " << num(mp.gamma) << "\nv0 = " << num(mp.v0)
       << "\nnu = " << num(mp.nu) << "\nmu = " << num(mp.mu) << "\nalpha1 = " << num(mp.alpha1)
       << "\nalpha2 = " << num(mp.alpha2) << "\nzeta = " << num(mp.zeta) << "\neta = " << num(mp.eta)
       << "\nh_smooth = " << num(mp.h_smooth) << "\n";
    if (mp.kernel.kind == KernelSpec::Bump) os << "kernel = bump:" << num(mp.kernel.R) << "\n";
    else os << "kernel = morse:" << num(mp.kernel.a) << ":" << num(mp.kernel.r_a) << "\n";
    if (!cfg.agent_positions.empty()) {
        os << "\n[agents]\npositions = ";
        for (std::size_t i = 0; i < cfg.agent_positions.size(); ++i)
            os << (i ? ", " : "") << num(cfg.agent_positions[i].x) << ":" << num(cfg.agent_positions[i].y);
        os << "\n";
        if (!cfg.initial_u.empty()) {
            os << "u0 = ";
            for (std::size_t i = 0; i < cfg.initial_u.size(); ++i)
                os << (i ? ", " : "") << num(cfg.initial_u[i].x) << ":" << num(cfg.initial_u[i].y);
            os << "\n";
        }
        if (!cfg.initial_c.empty()) {
            os << "c0 = ";
            for (std::size_t i = 0; i < cfg.initial_c.size(); ++i)
                os << (i ? ", " : "") << num(cfg.initial_c[i]);
            os << "\n";
        }
    }
    if (!cfg.bells.empty()) {
        os << "\n[density]\nbells = ";
        for (std::size_t i = 0; i < cfg.bells.size(); ++i) {
            const auto& b = cfg.bells[i];
            os << (i ? ", " : "") << num(b.cx) << ":" << num(b.cy) << ":" << num(b.variance)
               << ":" << num(b.amplitude);
        }
        os << "\n";
    }
    os << "\n[observation]\nregion = ";
    if (cfg.observation.all) os << "all\n";
    else os << num(cfg.observation.x0) << ":" << num(cfg.observation.y0) << ":"
            << num(cfg.observation.x1) << ":" << num(cfg.observation.y1) << "\n";
    os << "\n[optimizer]\nmax_iterations = " << cfg.optimizer.max_iterations
       << "\nstationarity_tol = " << num(cfg.optimizer.stationarity_tol)
       << "\ninitial_step = " << num(cfg.optimizer.initial_step)
       << "\narmijo_decrease = " << num(cfg.optimizer.armijo_decrease) << "\n";
    os << "\n[run]\nallow_cfl_violation = " << (cfg.allow_cfl_violation ? "true" : "false") << "\n";
    os << "\n[output]\nsnapshot_stride = " << cfg.snapshot_stride << "\n";
    return os.str();
}

// ---------------------------------------------------------------------------
// Presets: the three example scenarios. Published parameters are used where
// available; geometry, initial bells, agent starts and kernel parameters are
// documented reconstructions.

inline ScenarioConfig preset_example1() {
    ScenarioConfig cfg;
    cfg.room = {0.0, 0.0, 12.0, 8.0,
                {{ExitInterval::South, 3.0, 4.2},
                 {ExitInterval::North, 3.0, 4.2},
                 {ExitInterval::East, 2.0, 6.0}},
                {{8.4, 0.0, 9.4, 2.6}, {8.4, 5.4, 9.4, 8.0}},
                0.9};
    cfg.horizon = 9.0;
    cfg.steps = 300;
    cfg.params.kernel.kind = KernelSpec::Morse;
    cfg.params.kernel.a = 0.7;
    cfg.params.kernel.r_a = 0.5;
    cfg.agent_positions = {{2.4, 3.2}, {2.4, 4.8}, {3.6, 4.0}};
    cfg.initial_u = {{0.6, 0.0}};   // straight right, sized to stay inside over [0,T]
    cfg.initial_c = {0.5};
    cfg.bells = {{1.8, 2.0, 0.3, 0.75}, {1.8, 4.0, 0.3, 0.75}, {1.8, 6.0, 0.3, 0.75},
                 {3.2, 2.8, 0.3, 0.75}, {3.2, 5.2, 0.3, 0.75}, {4.4, 4.0, 0.3, 0.75}};
    cfg.observation = {false, 0.0, 0.0, 9.4, 8.0};   // the room enclosed by the walls
    return cfg;
}

inline ScenarioConfig preset_example2() {
    ScenarioConfig cfg;
    cfg.room = {0.0, 0.0, 12.0, 9.0,
                {{ExitInterval::West, 4.0, 5.0},
                 {ExitInterval::North, 4.0, 8.0},
                 {ExitInterval::South, 4.0, 8.0}},
                {},
                0.45};
    cfg.horizon = 12.0;
    cfg.steps = 800;
    cfg.params.kernel.kind = KernelSpec::Morse;
    cfg.params.kernel.a = 0.7;
    cfg.params.kernel.r_a = 0.5;
    cfg.agent_positions = {{3.0, 3.8}, {3.0, 5.2}};
    cfg.initial_u = {{0.5, 0.0}};   // straight right, sized to stay inside over [0,T]
    cfg.initial_c = {0.5};
    cfg.bells = {{1.6, 3.4, 0.25, 0.65}, {1.6, 4.5, 0.25, 0.65}, {1.6, 5.6, 0.25, 0.65},
                 {2.8, 4.0, 0.25, 0.65}, {2.8, 5.0, 0.25, 0.65}, {3.8, 4.5, 0.25, 0.65}};
    return cfg;
}

inline ScenarioConfig preset_example3() {
    ScenarioConfig cfg;
    cfg.room = {0.0, 0.0, 10.0, 10.0,
                {{ExitInterval::South, 4.6, 5.6},
                 {ExitInterval::East, 4.0, 6.0},
                 {ExitInterval::North, 3.5, 6.5}},
                {},
                1.0};
    cfg.horizon = 10.0;
    cfg.steps = 300;
    cfg.params.kernel.kind = KernelSpec::Morse;
    cfg.params.kernel.a = 0.7;
    cfg.params.kernel.r_a = 0.5;
    cfg.agent_positions = {{4.2, 3.2}, {5.8, 3.2}};
    cfg.initial_u = {{0.0, 0.45}};   // toward the room center, sized to stay inside
    cfg.initial_c = {0.5};
    cfg.bells = {{4.2, 1.6, 0.25, 0.8}, {5.8, 1.6, 0.25, 0.8}, {3.4, 2.8, 0.25, 0.8},
                 {5.0, 2.4, 0.25, 0.8}, {6.6, 2.8, 0.25, 0.8}, {5.0, 3.8, 0.25, 0.8}};
    return cfg;
}

// Loads a config file; the preset names example1|example2|example3 are
// accepted in place of a path.
inline ScenarioConfig load_config(const std::string& path_or_preset) {
    if (path_or_preset == "example1") return preset_example1();
    if (path_or_preset == "example2") return preset_example2();
    if (path_or_preset == "example3") return preset_example3();
    std::ifstream is(path_or_preset);
    if (!is) throw ConfigError(concat("load_config: cannot open '", path_or_preset, "'"));
    return parse_config(is, path_or_preset);
}

} // namespace evac

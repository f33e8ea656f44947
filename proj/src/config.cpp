#include "imps/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>

namespace imps {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

[[noreturn]] void fail(int line, const std::string& what) {
    std::ostringstream os;
    os << "config parse error at line " << line << ": " << what;
    throw FormatError(os.str());
}

} // namespace

KeyValueFile KeyValueFile::parse(const std::string& text) {
    KeyValueFile kv;
    std::istringstream is(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find_first_of("#;");
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') fail(lineno, "unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty()) fail(lineno, "empty section name");
            kv.sections_[section];
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) fail(lineno, "expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) fail(lineno, "empty key");
        kv.sections_[section][key] = value;
        kv.lines_[section + "." + key] = lineno;
    }
    return kv;
}

KeyValueFile KeyValueFile::parse_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw FormatError("config: cannot open '" + path + "'");
    std::ostringstream buf;
    buf << is.rdbuf();
    return parse(buf.str());
}

bool KeyValueFile::has(const std::string& section, const std::string& key) const {
    auto s = sections_.find(section);
    return s != sections_.end() && s->second.count(key) > 0;
}

std::string KeyValueFile::get(const std::string& section, const std::string& key) const {
    if (!has(section, key))
        throw FormatError("config: missing required key [" + section + "] " + key);
    return sections_.at(section).at(key);
}

std::string KeyValueFile::get_or(const std::string& section, const std::string& key,
                                 const std::string& fallback) const {
    return has(section, key) ? sections_.at(section).at(key) : fallback;
}

double KeyValueFile::get_double(const std::string& section, const std::string& key) const {
    const std::string raw = get(section, key);
    if (raw == "inf") return std::numeric_limits<double>::infinity();
    try {
        std::size_t used = 0;
        const double v = std::stod(raw, &used);
        if (used != raw.size()) throw std::invalid_argument(raw);
        return v;
    } catch (const std::exception&) {
        const auto it = lines_.find(section + "." + key);
        fail(it == lines_.end() ? 0 : it->second, "not a number: '" + raw + "'");
    }
}

double KeyValueFile::get_double_or(const std::string& section, const std::string& key,
                                   double fallback) const {
    return has(section, key) ? get_double(section, key) : fallback;
}

long KeyValueFile::get_long_or(const std::string& section, const std::string& key,
                               long fallback) const {
    if (!has(section, key)) return fallback;
    const double v = get_double(section, key);
    if (v != std::floor(v)) {
        const auto it = lines_.find(section + "." + key);
        fail(it == lines_.end() ? 0 : it->second, "expected an integer");
    }
    return static_cast<long>(v);
}

bool KeyValueFile::get_bool_or(const std::string& section, const std::string& key,
                               bool fallback) const {
    if (!has(section, key)) return fallback;
    std::string v = get(section, key);
    std::transform(v.begin(), v.end(), v.begin(), ::tolower);
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    const auto it = lines_.find(section + "." + key);
    fail(it == lines_.end() ? 0 : it->second, "expected a boolean");
}

std::string KeyValueFile::echo() const {
    std::ostringstream os;
    for (const auto& [section, entries] : sections_) {
        os << "# [" << section << "]\n";
        for (const auto& [key, value] : entries) os << "# " << key << " = " << value << "\n";
    }
    return os.str();
}

std::vector<double> parse_grid(const std::string& text) {
    std::vector<double> out;
    const std::string t = trim(text);
    if (t.empty()) return out;
    const auto c1 = t.find(':');
    if (c1 != std::string::npos) {
        const auto c2 = t.find(':', c1 + 1);
        if (c2 == std::string::npos) throw FormatError("grid: expected lo:step:hi in '" + t + "'");
        const double lo = std::stod(t.substr(0, c1));
        const double step = std::stod(t.substr(c1 + 1, c2 - c1 - 1));
        const double hi = std::stod(t.substr(c2 + 1));
        if (step <= 0) throw FormatError("grid: step must be positive");
        for (double v = lo; v <= hi + 0.5 * step; v += step) out.push_back(v);
        return out;
    }
    std::istringstream is(t);
    std::string item;
    while (std::getline(is, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(std::stod(item));
    }
    return out;
}

Mpo ModelSpec::build() const { return build_at(t, mu); }

ExpSumFit ModelSpec::kernel() const {
    // the fit is deterministic and reused across sweep points; memoize
    static std::mutex guard;
    static std::map<std::pair<int, long>, ExpSumFit> cache;
    std::lock_guard<std::mutex> lock(guard);
    auto [it, inserted] = cache.try_emplace({n_exp, fit_r_max});
    if (inserted) it->second = fit_power_law(3.0, n_exp, fit_r_max);
    return it->second;
}

Mpo ModelSpec::build_at(double t_override, double mu_override) const {
    if (builder == "ising") return build_ising_mpo(j, h);
    if (builder == "heisenberg") return build_heisenberg_mpo(jx, jy, jz);
    if (builder == "exp_decay") return build_exp_decay_mpo(j, lambda);
    if (builder == "dipolar_bose_hubbard") {
        const bool hardcore = !(u >= 0) || std::isinf(u);
        const int nm = hardcore ? 1 : n_max;
        const double uu = hardcore ? 0.0 : u;
        return build_dipolar_bose_hubbard_mpo(v, uu, mu_override, t_override, nm, kernel());
    }
    throw FormatError("model: unknown builder '" + builder + "'");
}

Matrix ModelSpec::density_operator() const {
    if (builder == "dipolar_bose_hubbard") {
        const bool hardcore = !(u >= 0) || std::isinf(u);
        return boson_number(hardcore ? 1 : n_max);
    }
    // spin models: report the up-spin fraction
    return 0.5 * (Matrix::Identity(2, 2) + pauli_z());
}

RunConfig RunConfig::from_file(const std::string& path) {
    return from_kv(KeyValueFile::parse_file(path));
}

RunConfig RunConfig::from_kv(const KeyValueFile& kv) {
    RunConfig rc;
    rc.echo = kv.echo();

    ModelSpec& m = rc.model;
    m.builder = kv.get("model", "builder");
    m.j = kv.get_double_or("model", "J", 1.0);
    m.h = kv.get_double_or("model", "h", 1.0);
    m.jx = kv.get_double_or("model", "Jx", 1.0);
    m.jy = kv.get_double_or("model", "Jy", 1.0);
    m.jz = kv.get_double_or("model", "Jz", 1.0);
    m.lambda = kv.get_double_or("model", "lambda", 0.5);
    m.v = kv.get_double_or("model", "V", 1.0);
    m.u = kv.get_double_or("model", "U", -1.0);
    m.mu = kv.get_double_or("model", "mu", 0.0);
    m.t = kv.get_double_or("model", "t", 0.0);
    m.n_max = static_cast<int>(kv.get_long_or("model", "n_max", 2));
    m.n_exp = static_cast<int>(kv.get_long_or("model", "n_exp", 20));
    m.fit_r_max = kv.get_long_or("model", "fit_r_max", 1000);
    if (m.builder != "ising" && m.builder != "heisenberg" && m.builder != "exp_decay" &&
        m.builder != "dipolar_bose_hubbard")
        throw FormatError("model: unknown builder '" + m.builder + "'");

    EngineConfig& e = rc.engine;
    e.chi = kv.get_long_or("engine", "chi", 16);
    e.chi_start = kv.get_long_or("engine", "chi_start", 0);
    e.grow_at_round = static_cast<int>(kv.get_long_or("engine", "grow_at_round", 0));
    e.init_sites = static_cast<int>(kv.get_long_or("engine", "init_sites", 8));
    e.max_rounds = static_cast<int>(kv.get_long_or("engine", "max_rounds", 2000));
    e.conv_tol = kv.get_double_or("engine", "conv_tol", 1e-9);
    e.conv_window = static_cast<int>(kv.get_long_or("engine", "conv_window", 20));
    e.superposition = kv.get_bool_or("engine", "superposition", true);
    e.gain = kv.get_bool_or("engine", "gain", true);
    e.enforce_invariance = kv.get_bool_or("engine", "enforce_invariance", false);
    e.mirror_symmetry = kv.get_bool_or("engine", "mirror_symmetry", false);
    const std::string mode = kv.get_or("engine", "energy_mode", "tracking");
    if (mode == "off")
        e.energy_mode = EnergySubtraction::Off;
    else if (mode == "tracking")
        e.energy_mode = EnergySubtraction::Tracking;
    else if (mode == "eigenvalue")
        e.energy_mode = EnergySubtraction::Eigenvalue;
    else
        throw FormatError("engine: unknown energy_mode '" + mode + "'");
    e.delta_max_factor = kv.get_double_or("engine", "delta_max_factor", 10.0);
    e.gamma_floor = kv.get_double_or("engine", "gamma_floor", 1e-12);
    e.recycle_seeds = static_cast<int>(kv.get_long_or("engine", "recycle_seeds", 3));
    e.grow_noise = kv.get_double_or("engine", "grow_noise", 0.0);
    e.seed = static_cast<std::uint64_t>(kv.get_long_or("engine", "seed", 1));
    e.solver_tol = kv.get_double_or("engine", "solver_tol", 1e-9);
    e.solver_max_basis = static_cast<int>(kv.get_long_or("engine", "solver_max_basis", 24));
    e.solver_max_iterations =
        static_cast<int>(kv.get_long_or("engine", "solver_max_iterations", 60));
    e.use_preconditioner = kv.get_bool_or("engine", "use_preconditioner", true);

    if (kv.has("sweep", "t_values")) rc.sweep_t = parse_grid(kv.get("sweep", "t_values"));
    if (kv.has("sweep", "mu_values")) rc.sweep_mu = parse_grid(kv.get("sweep", "mu_values"));
    rc.out_dir = kv.get_or("output", "dir", ".");
    rc.workers = static_cast<int>(kv.get_long_or("run", "workers", 0));
    return rc;
}

} // namespace imps

#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "imps/engine.hpp"
#include "imps/expfit.hpp"
#include "imps/mpo.hpp"

namespace imps {

/// Sectioned key/value file ("[section]", "key = value", '#' comments).
/// Values keep their raw text; typed access with line-accurate errors.
class KeyValueFile {
  public:
    static KeyValueFile parse(const std::string& text);
    static KeyValueFile parse_file(const std::string& path);

    bool has(const std::string& section, const std::string& key) const;
    std::string get(const std::string& section, const std::string& key) const;
    std::string get_or(const std::string& section, const std::string& key,
                       const std::string& fallback) const;
    double get_double(const std::string& section, const std::string& key) const;
    double get_double_or(const std::string& section, const std::string& key, double fallback) const;
    long get_long_or(const std::string& section, const std::string& key, long fallback) const;
    bool get_bool_or(const std::string& section, const std::string& key, bool fallback) const;

    const std::map<std::string, std::map<std::string, std::string>>& sections() const {
        return sections_;
    }
    /// Echo of the parsed content, '# '-prefixed, for output provenance.
    std::string echo() const;

  private:
    std::map<std::string, std::map<std::string, std::string>> sections_;
    std::map<std::string, int> lines_; // "section.key" -> line number
};

/// "a,b,c" or "lo:step:hi" (inclusive within rounding).
std::vector<double> parse_grid(const std::string& text);

struct ModelSpec {
    std::string builder; // ising | heisenberg | exp_decay | dipolar_bose_hubbard
    double j = 1.0, h = 1.0;
    double jx = 1.0, jy = 1.0, jz = 1.0;
    double lambda = 0.5;
    double v = 1.0, u = -1.0 /* <0: hardcore */, mu = 0.0, t = 0.0;
    int n_max = 2;
    int n_exp = 20;
    long fit_r_max = 1000;

    Mpo build() const;
    Mpo build_at(double t_override, double mu_override) const;
    /// Single-site density observable used in sweep/analyze output.
    Matrix density_operator() const;
    ExpSumFit kernel() const; // fitted long-range kernel (boson model)
};

struct RunConfig {
    ModelSpec model;
    EngineConfig engine;
    std::vector<double> sweep_t{};
    std::vector<double> sweep_mu{};
    std::string out_dir = ".";
    int workers = 0; // 0: from IMPS_WORKERS or hardware
    std::string echo; // config text echoed into outputs

    static RunConfig from_file(const std::string& path);
    static RunConfig from_kv(const KeyValueFile& kv);
};

} // namespace imps

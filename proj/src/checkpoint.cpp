#include "imps/checkpoint.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace imps {

namespace {

constexpr char k_magic[8] = {'I', 'M', 'P', 'S', 'C', 'K', 'P', '1'};
constexpr std::uint32_t k_version = 1;

void put_bytes(std::ostream& os, const void* p, std::size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void get_bytes(std::istream& is, void* p, std::size_t n) {
    if (!is.read(static_cast<char*>(p), static_cast<std::streamsize>(n)))
        throw FormatError("checkpoint: truncated stream");
}

void put_u32(std::ostream& os, std::uint32_t v) { put_bytes(os, &v, sizeof v); }
void put_i64(std::ostream& os, std::int64_t v) { put_bytes(os, &v, sizeof v); }
void put_f64(std::ostream& os, double v) { put_bytes(os, &v, sizeof v); }

std::uint32_t get_u32(std::istream& is) {
    std::uint32_t v;
    get_bytes(is, &v, sizeof v);
    return v;
}
std::int64_t get_i64(std::istream& is) {
    std::int64_t v;
    get_bytes(is, &v, sizeof v);
    return v;
}
double get_f64(std::istream& is) {
    double v;
    get_bytes(is, &v, sizeof v);
    return v;
}

void put_string(std::ostream& os, const std::string& s) {
    put_i64(os, static_cast<std::int64_t>(s.size()));
    put_bytes(os, s.data(), s.size());
}
std::string get_string(std::istream& is) {
    const std::int64_t n = get_i64(is);
    if (n < 0 || n > (1LL << 32)) throw FormatError("checkpoint: bad string length");
    std::string s(static_cast<std::size_t>(n), '\0');
    get_bytes(is, s.data(), s.size());
    return s;
}

void put_tensor(std::ostream& os, const Tensor& t) {
    // rank -1 marks a default-constructed (absent) tensor
    if (t.rank() == 0 && t.size() == 0) {
        put_i64(os, -1);
        return;
    }
    put_i64(os, t.rank());
    for (long i = 0; i < t.rank(); ++i) put_i64(os, t.extent(i));
    put_bytes(os, t.data(), static_cast<std::size_t>(t.size()) * sizeof(cx));
}
Tensor get_tensor(std::istream& is) {
    const std::int64_t rank = get_i64(is);
    if (rank == -1) return Tensor();
    if (rank < 0 || rank > 16) throw FormatError("checkpoint: bad tensor rank");
    std::vector<long> shape;
    for (std::int64_t i = 0; i < rank; ++i) shape.push_back(static_cast<long>(get_i64(is)));
    Tensor t(shape);
    get_bytes(is, t.data(), static_cast<std::size_t>(t.size()) * sizeof(cx));
    return t;
}

void put_matrix(std::ostream& os, const Matrix& m) {
    put_i64(os, m.rows());
    put_i64(os, m.cols());
    put_bytes(os, m.data(), static_cast<std::size_t>(m.size()) * sizeof(cx));
}
Matrix get_matrix(std::istream& is) {
    const std::int64_t r = get_i64(is), c = get_i64(is);
    if (r < 0 || c < 0) throw FormatError("checkpoint: bad matrix shape");
    Matrix m(r, c);
    get_bytes(is, m.data(), static_cast<std::size_t>(m.size()) * sizeof(cx));
    return m;
}

void put_vector_cx(std::ostream& os, const Vector& v) {
    put_i64(os, v.size());
    put_bytes(os, v.data(), static_cast<std::size_t>(v.size()) * sizeof(cx));
}
Vector get_vector_cx(std::istream& is) {
    const std::int64_t n = get_i64(is);
    Vector v(n);
    get_bytes(is, v.data(), static_cast<std::size_t>(v.size()) * sizeof(cx));
    return v;
}

void put_doubles(std::ostream& os, const std::vector<double>& v) {
    put_i64(os, static_cast<std::int64_t>(v.size()));
    put_bytes(os, v.data(), v.size() * sizeof(double));
}
std::vector<double> get_doubles(std::istream& is) {
    const std::int64_t n = get_i64(is);
    if (n < 0) throw FormatError("checkpoint: bad array length");
    std::vector<double> v(static_cast<std::size_t>(n));
    get_bytes(is, v.data(), v.size() * sizeof(double));
    return v;
}

void put_terms(std::ostream& os, const HamiltonianTerms& t) {
    put_matrix(os, t.local);
    put_i64(os, static_cast<std::int64_t>(t.pairs.size()));
    for (const PairInteraction& p : t.pairs) {
        put_matrix(os, p.op_a);
        put_matrix(os, p.op_b);
        put_doubles(os, p.weights);
        put_doubles(os, p.rates);
    }
}
HamiltonianTerms get_terms(std::istream& is) {
    HamiltonianTerms t;
    t.local = get_matrix(is);
    const std::int64_t n = get_i64(is);
    for (std::int64_t i = 0; i < n; ++i) {
        PairInteraction p;
        p.op_a = get_matrix(is);
        p.op_b = get_matrix(is);
        p.weights = get_doubles(is);
        p.rates = get_doubles(is);
        t.pairs.push_back(std::move(p));
    }
    return t;
}

void put_mpo(std::ostream& os, const Mpo& m) {
    put_tensor(os, m.bulk);
    put_tensor(os, m.left_boundary);
    put_tensor(os, m.right_boundary);
    put_i64(os, m.local_row);
    put_i64(os, m.local_col);
    put_terms(os, m.terms);
    put_string(os, m.name);
}
Mpo get_mpo(std::istream& is) {
    Mpo m;
    m.bulk = get_tensor(is);
    m.left_boundary = get_tensor(is);
    m.right_boundary = get_tensor(is);
    m.local_row = static_cast<long>(get_i64(is));
    m.local_col = static_cast<long>(get_i64(is));
    m.terms = get_terms(is);
    m.name = get_string(is);
    return m;
}

void put_config(std::ostream& os, const EngineConfig& c) {
    put_i64(os, c.chi);
    put_i64(os, c.chi_start);
    put_i64(os, c.grow_at_round);
    put_i64(os, c.init_sites);
    put_i64(os, c.max_rounds);
    put_f64(os, c.conv_tol);
    put_i64(os, c.conv_window);
    put_u32(os, c.superposition ? 1 : 0);
    put_u32(os, c.gain ? 1 : 0);
    put_u32(os, c.enforce_invariance ? 1 : 0);
    put_u32(os, c.mirror_symmetry ? 1 : 0);
    put_u32(os, static_cast<std::uint32_t>(c.energy_mode));
    put_f64(os, c.delta_max_factor);
    put_f64(os, c.gamma_floor);
    put_f64(os, c.ema_keep);
    put_f64(os, c.ema_mix);
    put_f64(os, c.ema_cap);
    put_i64(os, c.recycle_seeds);
    put_f64(os, c.recycle_degeneracy_tol);
    put_f64(os, c.grow_noise);
    put_i64(os, static_cast<std::int64_t>(c.seed));
    put_f64(os, c.solver_tol);
    put_i64(os, c.solver_max_basis);
    put_i64(os, c.solver_max_iterations);
    put_i64(os, c.solver_restart_keep);
    put_u32(os, c.use_preconditioner ? 1 : 0);
}
EngineConfig get_config(std::istream& is) {
    EngineConfig c;
    c.chi = static_cast<long>(get_i64(is));
    c.chi_start = static_cast<long>(get_i64(is));
    c.grow_at_round = static_cast<int>(get_i64(is));
    c.init_sites = static_cast<int>(get_i64(is));
    c.max_rounds = static_cast<int>(get_i64(is));
    c.conv_tol = get_f64(is);
    c.conv_window = static_cast<int>(get_i64(is));
    c.superposition = get_u32(is) != 0;
    c.gain = get_u32(is) != 0;
    c.enforce_invariance = get_u32(is) != 0;
    c.mirror_symmetry = get_u32(is) != 0;
    c.energy_mode = static_cast<EnergySubtraction>(get_u32(is));
    c.delta_max_factor = get_f64(is);
    c.gamma_floor = get_f64(is);
    c.ema_keep = get_f64(is);
    c.ema_mix = get_f64(is);
    c.ema_cap = get_f64(is);
    c.recycle_seeds = static_cast<int>(get_i64(is));
    c.recycle_degeneracy_tol = get_f64(is);
    c.grow_noise = get_f64(is);
    c.seed = static_cast<std::uint64_t>(get_i64(is));
    c.solver_tol = get_f64(is);
    c.solver_max_basis = static_cast<int>(get_i64(is));
    c.solver_max_iterations = static_cast<int>(get_i64(is));
    c.solver_restart_keep = static_cast<int>(get_i64(is));
    c.use_preconditioner = get_u32(is) != 0;
    return c;
}

} // namespace

void save_engine(const Engine& engine, std::ostream& os) {
    put_bytes(os, k_magic, sizeof k_magic);
    put_u32(os, k_version);
    put_config(os, engine.cfg_);
    put_mpo(os, engine.mpo_);
    put_terms(os, engine.physical_terms_);
    put_tensor(os, engine.env_left_);
    put_tensor(os, engine.env_right_);
    put_tensor(os, engine.site_);
    put_tensor(os, engine.conv_.reference);
    put_f64(os, engine.conv_.avg_deviation);
    put_i64(os, engine.conv_.avg_updates);
    put_f64(os, engine.conv_.last_xi);
    put_f64(os, engine.conv_.gamma_floor);
    put_f64(os, engine.conv_.ema_keep);
    put_f64(os, engine.conv_.ema_mix);
    put_f64(os, engine.conv_.ema_cap);
    put_doubles(os, engine.conv_.energy_history);
    put_i64(os, static_cast<std::int64_t>(engine.reference_history_.size()));
    for (const Tensor& t : engine.reference_history_) put_tensor(os, t);
    put_tensor(os, engine.q_left_prev_);
    put_tensor(os, engine.q_right_prev_);
    put_u32(os, engine.davidson_ ? 1 : 0);
    if (engine.davidson_) {
        const DavidsonPreconditioner& d = *engine.davidson_;
        put_doubles(os, d.values);
        put_i64(os, static_cast<std::int64_t>(d.vectors.size()));
        for (const Vector& v : d.vectors) put_vector_cx(os, v);
        for (const Vector& v : d.applied) put_vector_cx(os, v);
        put_f64(os, d.alpha);
        put_f64(os, d.e0_shifted);
        put_i64(os, d.dim);
        put_f64(os, d.drop_ratio);
    }
    put_u32(os, engine.recycle_disabled_ ? 1 : 0);
    put_f64(os, engine.gamma_prev_);
    put_f64(os, engine.sigma_shift_);
    put_f64(os, engine.e_site_);
    put_f64(os, engine.lambda_asym_);
    put_f64(os, engine.init_closed_energy_);
    put_f64(os, engine.init_dense_energy_);
    put_i64(os, engine.round_);
    put_i64(os, engine.consecutive_converged_);
    put_u32(os, engine.converged_ ? 1 : 0);
    put_u32(os, engine.plain_absorb_once_ ? 1 : 0);
    std::ostringstream rng;
    rng << engine.rng_;
    put_string(os, rng.str());
    if (!os) throw FormatError("checkpoint: write failed");
}

Engine load_engine(std::istream& is) {
    char magic[8];
    get_bytes(is, magic, sizeof magic);
    if (std::memcmp(magic, k_magic, sizeof magic) != 0)
        throw FormatError("checkpoint: bad magic (not a checkpoint file)");
    const std::uint32_t version = get_u32(is);
    if (version != k_version) {
        std::ostringstream msg;
        msg << "checkpoint: unsupported format version " << version << " (expected " << k_version
            << ")";
        throw FormatError(msg.str());
    }
    Engine e;
    e.cfg_ = get_config(is);
    if (!e.cfg_.c_policy)
        e.cfg_.c_policy = [](double dev) {
            return 1.0 - std::max(0.1, 0.7 + 0.1 * std::log10(std::max(dev, 1e-300)));
        };
    e.mpo_ = get_mpo(is);
    e.physical_terms_ = get_terms(is);
    e.env_left_ = get_tensor(is);
    e.env_right_ = get_tensor(is);
    e.site_ = get_tensor(is);
    e.conv_.reference = get_tensor(is);
    e.conv_.avg_deviation = get_f64(is);
    e.conv_.avg_updates = static_cast<int>(get_i64(is));
    e.conv_.last_xi = get_f64(is);
    e.conv_.gamma_floor = get_f64(is);
    e.conv_.ema_keep = get_f64(is);
    e.conv_.ema_mix = get_f64(is);
    e.conv_.ema_cap = get_f64(is);
    e.conv_.energy_history = get_doubles(is);
    const std::int64_t nhist = get_i64(is);
    for (std::int64_t i = 0; i < nhist; ++i) e.reference_history_.push_back(get_tensor(is));
    e.q_left_prev_ = get_tensor(is);
    e.q_right_prev_ = get_tensor(is);
    if (get_u32(is) != 0) {
        DavidsonPreconditioner d;
        d.values = get_doubles(is);
        const std::int64_t nv = get_i64(is);
        for (std::int64_t i = 0; i < nv; ++i) d.vectors.push_back(get_vector_cx(is));
        for (std::int64_t i = 0; i < nv; ++i) d.applied.push_back(get_vector_cx(is));
        d.alpha = get_f64(is);
        d.e0_shifted = get_f64(is);
        d.dim = static_cast<long>(get_i64(is));
        d.drop_ratio = get_f64(is);
        e.davidson_ = std::move(d);
    }
    e.recycle_disabled_ = get_u32(is) != 0;
    e.gamma_prev_ = get_f64(is);
    e.sigma_shift_ = get_f64(is);
    e.e_site_ = get_f64(is);
    e.lambda_asym_ = get_f64(is);
    e.init_closed_energy_ = get_f64(is);
    e.init_dense_energy_ = get_f64(is);
    e.round_ = static_cast<int>(get_i64(is));
    e.consecutive_converged_ = static_cast<int>(get_i64(is));
    e.converged_ = get_u32(is) != 0;
    e.plain_absorb_once_ = get_u32(is) != 0;
    std::istringstream rng(get_string(is));
    rng >> e.rng_;
    return e;
}

void save_engine_file(const Engine& engine, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("checkpoint: cannot open '" + path + "' for writing");
    save_engine(engine, os);
}

Engine load_engine_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("checkpoint: cannot open '" + path + "'");
    return load_engine(is);
}

} // namespace imps

#include "dhf/io/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "dhf/errors.hpp"

namespace dhf::io {

namespace {

constexpr std::array<char, 8> kMagic = {'D', 'H', 'F', 'C', 'K', 'P', 'T', '\0'};
// Guards against absurd lengths in corrupt files.
constexpr std::uint64_t kMaxLength = std::uint64_t{1} << 40;

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  void u64(std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out_.write(reinterpret_cast<const char*>(b), 8);
  }
  void u32(std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out_.write(reinterpret_cast<const char*>(b), 4);
  }
  void i64(long long v) { u64(static_cast<std::uint64_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u64(s.size());
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void vec(const Vector& v) {
    u64(static_cast<std::uint64_t>(v.size()));
    for (Index i = 0; i < v.size(); ++i) f64(v[i]);
  }
  void mat(const Matrix& m) {
    u64(static_cast<std::uint64_t>(m.rows()));
    u64(static_cast<std::uint64_t>(m.cols()));
    for (Index j = 0; j < m.cols(); ++j)
      for (Index i = 0; i < m.rows(); ++i) f64(m(i, j));
  }
  void indices(const std::vector<Index>& v) {
    u64(v.size());
    for (Index i : v) i64(i);
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  void bytes(char* p, std::size_t n) {
    in_.read(p, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) throw DataError("checkpoint is truncated");
  }
  std::uint64_t u64() {
    unsigned char b[8];
    bytes(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
  }
  std::uint32_t u32() {
    unsigned char b[4];
    bytes(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
  }
  long long i64() { return static_cast<long long>(u64()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::uint64_t length() {
    const auto n = u64();
    if (n > kMaxLength) throw DataError("checkpoint is corrupt (length out of range)");
    return n;
  }
  std::string str() {
    std::string s(length(), '\0');
    if (!s.empty()) bytes(s.data(), s.size());
    return s;
  }
  Vector vec() {
    Vector v(static_cast<Index>(length()));
    for (Index i = 0; i < v.size(); ++i) v[i] = f64();
    return v;
  }
  Matrix mat() {
    const auto r = static_cast<Index>(length());
    const auto c = static_cast<Index>(length());
    Matrix m(r, c);
    for (Index j = 0; j < c; ++j)
      for (Index i = 0; i < r; ++i) m(i, j) = f64();
    return m;
  }
  std::vector<Index> indices() {
    std::vector<Index> v(length());
    for (auto& i : v) i = static_cast<Index>(i64());
    return v;
  }

 private:
  std::istream& in_;
};

void write_spec(Writer& w, const DlmSpec& s) {
  w.u64(s.blocks.size());
  for (const auto& b : s.blocks) {
    w.u32(static_cast<std::uint32_t>(b.kind));
    w.i64(b.period);
    w.i64(b.harmonics);
    w.i64(b.width);
    w.f64(b.discount);
  }
  w.f64(s.variance_discount);
  w.u32(s.learn_variance ? 1 : 0);
  w.f64(s.fixed_variance);
}

DlmSpec read_spec(Reader& r) {
  DlmSpec s;
  s.blocks.resize(r.length());
  for (auto& b : s.blocks) {
    const auto kind = r.u32();
    if (kind > static_cast<std::uint32_t>(BlockKind::regression)) throw DataError("checkpoint is corrupt (block kind)");
    b.kind = static_cast<BlockKind>(kind);
    b.period = static_cast<int>(r.i64());
    b.harmonics = static_cast<int>(r.i64());
    b.width = static_cast<int>(r.i64());
    b.discount = r.f64();
  }
  s.variance_discount = r.f64();
  s.learn_variance = r.u32() != 0;
  s.fixed_variance = r.f64();
  s.validate();
  return s;
}

void write_state(Writer& w, const SvdState& s) {
  w.vec(s.m);
  w.mat(s.u);
  w.vec(s.s);
}

SvdState read_state(Reader& r) {
  SvdState s;
  s.m = r.vec();
  s.u = r.mat();
  s.s = r.vec();
  if (s.u.rows() != s.m.size() || s.u.cols() != s.s.size()) throw DataError("checkpoint is corrupt (state shape)");
  return s;
}

}  // namespace

void write_checkpoint(std::ostream& out, const Checkpoint& c) {
  Writer w(out);
  out.write(kMagic.data(), kMagic.size());
  w.u32(kCheckpointVersion);
  w.u64(c.edges.size());
  for (const auto& e : c.edges) {
    w.str(e.parent);
    w.str(e.child);
    w.str(e.level);
  }
  w.str(c.config_json);
  w.u64(c.factor_ids.size());
  for (const auto& f : c.factor_ids) w.str(f);
  w.str(c.last_time);
  w.i64(c.last_row);

  const Mrdlm& m = c.model;
  const auto& cfg = m.config();
  const auto& d = cfg.discounts;
  for (double v : {d.factor_trend, d.factor_seasonal, d.base_level, d.base_seasonal, d.base_regression, d.variance})
    w.f64(v);
  w.i64(cfg.period);
  w.i64(cfg.factor_harmonics);
  w.i64(cfg.base_harmonics);
  w.i64(cfg.init_window);
  w.f64(cfg.ridge);
  w.i64(cfg.max_factors);
  w.u64(cfg.factor_subsets.size());
  for (const auto& s : cfg.factor_subsets) w.indices(s);

  write_spec(w, m.factor_spec());
  write_state(w, m.factor_state());
  w.f64(m.factor_variance().n);
  w.mat(m.factor_variance().d);
  w.u64(static_cast<std::uint64_t>(m.n_base()));
  for (Index i = 0; i < m.n_base(); ++i) {
    const auto& b = m.base_model(i);
    w.indices(m.factor_subset(i));
    write_spec(w, b.spec());
    write_state(w, b.state());
    w.f64(b.variance().n);
    w.f64(b.variance().d);
  }
  w.i64(m.steps());
  if (!out) throw DataError("failed to write checkpoint");
}

Checkpoint read_checkpoint(std::istream& in) {
  Reader r(in);
  std::array<char, 8> magic{};
  r.bytes(magic.data(), magic.size());
  if (magic != kMagic) throw DataError("not a checkpoint file (bad magic)");
  const auto version = r.u32();
  if (version != kCheckpointVersion) {
    throw DataError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                    std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint c;
  c.edges.resize(r.length());
  for (auto& e : c.edges) {
    e.parent = r.str();
    e.child = r.str();
    e.level = r.str();
  }
  c.config_json = r.str();
  c.factor_ids.resize(r.length());
  for (auto& f : c.factor_ids) f = r.str();
  c.last_time = r.str();
  c.last_row = static_cast<long>(r.i64());

  MrdlmConfig cfg;
  auto& d = cfg.discounts;
  for (double* v : {&d.factor_trend, &d.factor_seasonal, &d.base_level, &d.base_seasonal, &d.base_regression,
                    &d.variance})
    *v = r.f64();
  cfg.period = static_cast<int>(r.i64());
  cfg.factor_harmonics = static_cast<int>(r.i64());
  cfg.base_harmonics = static_cast<int>(r.i64());
  cfg.init_window = static_cast<int>(r.i64());
  cfg.ridge = r.f64();
  cfg.max_factors = static_cast<Index>(r.i64());
  cfg.factor_subsets.resize(r.length());
  for (auto& s : cfg.factor_subsets) s = r.indices();

  DlmSpec factor_spec = read_spec(r);
  SvdState factor_state = read_state(r);
  MatrixVarianceState fv;
  fv.n = r.f64();
  fv.d = r.mat();
  const auto nb = r.length();
  std::vector<std::vector<Index>> subsets(nb);
  std::vector<DlmSpec> specs(nb);
  std::vector<SvdState> states(nb);
  std::vector<VarianceState> vars(nb);
  for (std::size_t i = 0; i < nb; ++i) {
    subsets[i] = r.indices();
    specs[i] = read_spec(r);
    states[i] = read_state(r);
    vars[i].n = r.f64();
    vars[i].d = r.f64();
  }
  const long steps = static_cast<long>(r.i64());
  char extra = 0;
  if (in.read(&extra, 1)) throw DataError("checkpoint is corrupt (trailing bytes)");
  c.model = Mrdlm::from_parts(std::move(cfg), std::move(factor_spec), std::move(specs), std::move(factor_state),
                              std::move(fv), std::move(subsets), std::move(states), std::move(vars), steps);
  return c;
}

void write_checkpoint_file(const std::string& path, const Checkpoint& c) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write '" + path + "'");
  write_checkpoint(f, c);
}

Checkpoint read_checkpoint_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open checkpoint '" + path + "'");
  return read_checkpoint(f);
}

}  // namespace dhf::io

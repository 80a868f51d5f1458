#include <snrl/checkpoint.hpp>

#include <zlib.h>

#include <bit>
#include <fstream>
#include <iterator>

namespace snrl {

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  std::size_t offset = 0;
  while (offset < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - offset, 1u << 30));
    crc = crc32(crc, bytes.data() + offset, chunk);
    offset += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

namespace {

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void raw(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }

  template <typename Derived>
  void values(const Eigen::DenseBase<Derived>& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) f64(m(i, j));
  }

  void dims(const Mlp& p) {
    const auto d = p.dims();
    u32(static_cast<std::uint32_t>(d.size()));
    for (auto x : d) u32(static_cast<std::uint32_t>(x));
  }

  void params(const Mlp& p) {
    for (std::size_t l = 0; l < p.num_layers(); ++l) {
      values(p.weights[l]);
      values(p.biases[l]);
    }
  }

  void adam(const AdamState& s) {
    params(s.first_moment);
    params(s.second_moment);
    u64(s.steps);
  }

  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }

  std::string raw(std::size_t n) {
    need(n);
    std::string s(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }

  template <typename Derived>
  void values(Eigen::DenseBase<Derived>& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = f64();
  }

  std::vector<Eigen::Index> dims() {
    const auto n = u32();
    if (n < 2 || n > 64) throw CheckpointError("checkpoint: implausible layer count");
    std::vector<Eigen::Index> d;
    for (std::uint32_t i = 0; i < n; ++i) {
      const auto x = u32();
      if (x == 0 || x > (1u << 20)) throw CheckpointError("checkpoint: implausible layer width");
      d.push_back(static_cast<Eigen::Index>(x));
    }
    return d;
  }

  Mlp params(const std::vector<Eigen::Index>& dims) {
    Mlp p;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
      Matrix<double> w(dims[l + 1], dims[l]);
      VectorXd b(dims[l + 1]);
      values(w);
      values(b);
      p.weights.push_back(std::move(w));
      p.biases.push_back(std::move(b));
    }
    return p;
  }

  AdamState adam(const std::vector<Eigen::Index>& dims) {
    AdamState s;
    s.first_moment = params(dims);
    s.second_moment = params(dims);
    s.steps = u64();
    s.tag = MemoryTag(MemoryKind::kBuffer, 2 * s.first_moment.element_count());
    return s;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw CheckpointError("checkpoint: truncated");
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const TrainState& ts, Regime regime) {
  Writer w;
  w.raw("SNRL");
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(regime));
  const bool spectral = ts.policy.is_spectral();
  w.u32(spectral ? 1 : 0);
  w.f64(ts.policy.sigma());
  w.f64(spectral ? ts.policy.sn_coef() : 0.0);
  w.u32(spectral ? static_cast<std::uint32_t>(ts.policy.sn().state.power_iterations) : 0);

  const Mlp& policy = ts.policy.trainable();
  w.dims(policy);
  w.dims(ts.value);
  w.dims(ts.disc.net);

  w.params(policy);
  if (spectral) {
    const auto& st = ts.policy.sn().state;
    for (const auto& u : st.u) w.values(u);
    const bool has_sigma = st.sigma.size() == st.u.size();
    w.u32(has_sigma ? 1 : 0);
    if (has_sigma)
      for (double s : st.sigma) w.f64(s);
  }
  w.params(ts.value);
  w.params(ts.disc.net);
  w.adam(ts.policy_opt);
  w.adam(ts.value_opt);
  w.adam(ts.disc_opt);
  w.u64(ts.update_index);

  auto& bytes = w.bytes();
  const auto crc = crc32_of(bytes);
  for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(crc >> (8 * i)));
  return std::move(bytes);
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12) throw CheckpointError("checkpoint: file too short");
  const auto body = bytes.first(bytes.size() - 4);
  std::uint32_t stored = 0;
  for (int i = 0; i < 4; ++i)
    stored |= static_cast<std::uint32_t>(bytes[bytes.size() - 4 + i]) << (8 * i);
  if (crc32_of(body) != stored) throw CheckpointError("checkpoint: CRC-32 mismatch");

  Reader r(body);
  if (r.raw(4) != "SNRL") throw CheckpointError("checkpoint: bad magic");
  const auto version = r.u32();
  if (version != kCheckpointVersion)
    throw CheckpointError("checkpoint: unsupported format version " + std::to_string(version));
  const auto tag = r.u32();
  if (tag > 3) throw CheckpointError("checkpoint: unknown regime tag");
  const auto regime = static_cast<Regime>(tag);
  const bool spectral = r.u32() != 0;
  const double sigma = r.f64();
  const double sn_coef = r.f64();
  const auto power_iterations = static_cast<int>(r.u32());

  const auto pdims = r.dims();
  const auto vdims = r.dims();
  const auto ddims = r.dims();

  Mlp policy_params = r.params(pdims);
  std::optional<GaussianPolicy> policy;
  try {
    if (spectral) {
      SnNet sn;
      sn.raw = std::move(policy_params);
      std::int64_t elems = 0;
      for (std::size_t l = 0; l + 1 < pdims.size(); ++l) {
        VectorXd u(pdims[l + 1]);
        r.values(u);
        elems += u.size();
        sn.state.u.push_back(std::move(u));
      }
      sn.state.tag = MemoryTag(MemoryKind::kBuffer, elems);
      sn.state.sn_coef = sn_coef;
      sn.state.power_iterations = power_iterations;
      const bool has_sigma = r.u32() != 0;
      if (has_sigma) {
        for (std::size_t l = 0; l + 1 < pdims.size(); ++l) sn.state.sigma.push_back(r.f64());
      }
      policy = GaussianPolicy::spectral(std::move(sn), sigma, !has_sigma);
    } else {
      policy = GaussianPolicy::plain(std::move(policy_params), sigma);
    }
  } catch (const ContractError& e) {
    throw CheckpointError(std::string("checkpoint: invalid policy: ") + e.what());
  }

  Mlp value = r.params(vdims);
  Discriminator disc{r.params(ddims), ddims.front() / 2};
  TrainState ts{std::move(*policy), std::move(value), std::move(disc), {}, {}, {}, 0, {}};
  ts.policy_opt = r.adam(pdims);
  ts.value_opt = r.adam(vdims);
  ts.disc_opt = r.adam(ddims);
  ts.update_index = r.u64();
  if (r.remaining() != 0) throw CheckpointError("checkpoint: trailing bytes");
  ts.retag();
  return {regime, std::move(ts)};
}

void save_checkpoint(const std::filesystem::path& path, const TrainState& ts, Regime regime) {
  const auto bytes = encode_checkpoint(ts, regime);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot read " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace snrl

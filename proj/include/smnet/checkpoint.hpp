#pragma once

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "smnet/errors.hpp"
#include "smnet/model.hpp"
#include "smnet/trainer.hpp"

namespace smnet {

// Text checkpoint: a header, the model topology, the trainer schedule, then
// every tensor as hexadecimal floats so values survive bit for bit.
//
//   SMNET1
//   topology sequential seed 7 layers 3
//   layer 0 32 256 relu 1
//   trainer k 3 gamma <hex> beta1 <hex> beta2 <hex> p_train <hex> p_eval <hex> carry
//   tensor layer0.W 2 256 32
//   <values>
//   end
struct Checkpoint {
  FastWeightModel model;
  TrainerConfig trainer;
};

inline constexpr const char* kCheckpointMagic = "SMNET1";

namespace detail {

inline std::string hex(double v) {
  std::ostringstream s;
  s << std::hexfloat << v;
  return s.str();
}

inline const char* topology_name(Topology t) { return t == Topology::actor_critic ? "actor_critic" : "sequential"; }

inline Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "leaky_relu") return Activation::leaky_relu;
  if (s == "tanh") return Activation::tanh;
  if (s == "identity") return Activation::identity;
  throw std::invalid_argument("unknown activation " + s);
}

inline void write_tensor(std::ostream& out, const std::string& name, const Tensor& t) {
  out << "tensor " << name << ' ' << t.rank();
  for (std::size_t d : t.shape()) out << ' ' << d;
  out << '\n';
  for (std::size_t i = 0; i < t.size(); ++i) out << (i ? " " : "") << hex(t[i]);
  out << '\n';
}

// Line-oriented reader that reports the byte offset of the current line.
class LineReader {
 public:
  explicit LineReader(std::string text) : text_(std::move(text)) {}

  std::size_t offset() const noexcept { return line_start_; }

  std::vector<std::string> tokens(const char* what) {
    if (pos_ >= text_.size()) throw ParseError(pos_, std::string("unexpected end of checkpoint, expected ") + what);
    line_start_ = pos_;
    std::size_t end = text_.find('\n', pos_);
    if (end == std::string::npos) end = text_.size();
    std::istringstream s(text_.substr(pos_, end - pos_));
    pos_ = end + 1;
    std::vector<std::string> out;
    for (std::string t; s >> t;) out.push_back(t);
    return out;
  }

  [[noreturn]] void fail(const std::string& what) const { throw ParseError(line_start_, what); }

 private:
  std::string text_;
  std::size_t pos_ = 0;
  std::size_t line_start_ = 0;
};

inline double parse_hex(const std::string& s, const LineReader& r) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') r.fail("bad number '" + s + "'");
  return v;
}

inline std::size_t parse_size(const std::string& s, const LineReader& r) {
  std::size_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) r.fail("bad integer '" + s + "'");
  return v;
}

}  // namespace detail

// Every named tensor of the model, in file order.
inline std::vector<std::pair<std::string, Tensor*>> checkpoint_tensors(FastWeightModel& model) {
  std::vector<std::pair<std::string, Tensor*>> out;
  for (std::size_t i = 0; i < model.layers().size(); ++i) {
    auto& l = model.layers()[i];
    const std::string p = "layer" + std::to_string(i);
    out.emplace_back(p + ".W", &l.w.value);
    out.emplace_back(p + ".b", &l.b.value);
    out.emplace_back(p + ".M", &l.m);
    out.emplace_back(p + ".I", &l.average);
    if (auto& meta = model.metas()[i]) {
      const std::string q = "meta" + std::to_string(i);
      out.emplace_back(q + ".W1", &meta->w1.value);
      out.emplace_back(q + ".b1", &meta->b1.value);
      out.emplace_back(q + ".W2", &meta->w2.value);
      out.emplace_back(q + ".b2", &meta->b2.value);
      out.emplace_back(q + ".W3", &meta->w3.value);
      out.emplace_back(q + ".b3", &meta->b3.value);
    }
  }
  return out;
}

// Bitwise comparison of every checkpointed tensor and of the topology.
inline bool same_state(const FastWeightModel& a, const FastWeightModel& b) {
  if (a.specs() != b.specs() || a.topology() != b.topology()) return false;
  auto ta = checkpoint_tensors(const_cast<FastWeightModel&>(a));
  auto tb = checkpoint_tensors(const_cast<FastWeightModel&>(b));
  if (ta.size() != tb.size()) return false;
  for (std::size_t i = 0; i < ta.size(); ++i)
    if (ta[i].first != tb[i].first || !(*ta[i].second == *tb[i].second)) return false;
  return true;
}

// Uncommitted in-window fast-weights are not saved; commit first.
inline std::string encode_checkpoint(const FastWeightModel& model, const TrainerConfig& trainer) {
  std::ostringstream out;
  out << kCheckpointMagic << '\n';
  out << "topology " << detail::topology_name(model.topology()) << " seed " << model.seed() << " layers "
      << model.specs().size() << '\n';
  for (std::size_t i = 0; i < model.specs().size(); ++i) {
    const auto& s = model.specs()[i];
    out << "layer " << i << ' ' << s.in << ' ' << s.out << ' ' << activation_name(s.activation) << ' '
        << (s.fast ? 1 : 0) << '\n';
  }
  const auto& f = trainer.fast;
  out << "trainer k " << trainer.k << " gamma " << detail::hex(f.gamma) << " beta1 " << detail::hex(f.beta1)
      << " beta2 " << detail::hex(f.beta2) << " p_train " << detail::hex(f.p_train) << " p_eval "
      << detail::hex(f.p_eval) << ' ' << carry_mode_name(f.carry_mode) << '\n';
  for (const auto& [name, t] : checkpoint_tensors(const_cast<FastWeightModel&>(model)))
    detail::write_tensor(out, name, *t);
  out << "end\n";
  return out.str();
}

inline Checkpoint decode_checkpoint(std::string text) {
  detail::LineReader r(std::move(text));
  auto head = r.tokens("header");
  if (head.size() != 1 || head[0] != kCheckpointMagic) r.fail("bad magic, expected SMNET1");

  auto topo = r.tokens("topology line");
  if (topo.size() != 6 || topo[0] != "topology" || topo[2] != "seed" || topo[4] != "layers")
    r.fail("malformed topology line");
  Topology topology;
  if (topo[1] == "sequential") topology = Topology::sequential;
  else if (topo[1] == "actor_critic") topology = Topology::actor_critic;
  else r.fail("unknown topology '" + topo[1] + "'");
  const std::uint64_t seed = detail::parse_size(topo[3], r);
  const std::size_t n_layers = detail::parse_size(topo[5], r);

  std::vector<LayerSpec> specs;
  for (std::size_t i = 0; i < n_layers; ++i) {
    auto t = r.tokens("layer line");
    if (t.size() != 6 || t[0] != "layer" || detail::parse_size(t[1], r) != i) r.fail("malformed layer line");
    LayerSpec s;
    s.in = detail::parse_size(t[2], r);
    s.out = detail::parse_size(t[3], r);
    try {
      s.activation = detail::parse_activation(t[4]);
    } catch (const std::invalid_argument& e) {
      r.fail(e.what());
    }
    s.fast = t[5] == "1";
    specs.push_back(s);
  }

  auto tr = r.tokens("trainer line");
  if (tr.size() != 14 || tr[0] != "trainer" || tr[1] != "k") r.fail("malformed trainer line");
  TrainerConfig trainer;
  trainer.k = static_cast<int>(detail::parse_size(tr[2], r));
  trainer.fast.gamma = detail::parse_hex(tr[4], r);
  trainer.fast.beta1 = detail::parse_hex(tr[6], r);
  trainer.fast.beta2 = detail::parse_hex(tr[8], r);
  trainer.fast.p_train = detail::parse_hex(tr[10], r);
  trainer.fast.p_eval = detail::parse_hex(tr[12], r);
  try {
    trainer.fast.carry_mode = parse_carry_mode(tr[13]);
  } catch (const ConfigError& e) {
    r.fail(e.what());
  }

  Checkpoint ck{FastWeightModel(), trainer};
  try {
    ck.model = FastWeightModel(specs, topology, seed);
  } catch (const ConfigError& e) {
    r.fail(e.what());
  }
  for (auto& [name, t] : checkpoint_tensors(ck.model)) {
    auto h = r.tokens("tensor header");
    if (h.size() < 3 || h[0] != "tensor" || h[1] != name) r.fail("expected tensor " + name);
    const std::size_t rank = detail::parse_size(h[2], r);
    std::vector<std::size_t> shape;
    for (std::size_t k = 0; k < rank; ++k) {
      if (3 + k >= h.size()) r.fail("tensor " + name + " header is missing dimensions");
      shape.push_back(detail::parse_size(h[3 + k], r));
    }
    if (shape != t->shape()) r.fail("tensor " + name + " has shape " + shape_string(shape) + ", model expects " +
                                    shape_string(t->shape()));
    auto vals = r.tokens("tensor values");
    if (vals.size() != t->size()) r.fail("tensor " + name + " has " + std::to_string(vals.size()) + " values");
    for (std::size_t k = 0; k < vals.size(); ++k) (*t)[k] = detail::parse_hex(vals[k], r);
  }
  auto end = r.tokens("end marker");
  if (end.size() != 1 || end[0] != "end") r.fail("expected end marker");
  return ck;
}

inline void save_checkpoint(const std::string& path, const FastWeightModel& model, const TrainerConfig& trainer) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f << encode_checkpoint(model, trainer);
  if (!f) throw std::runtime_error("write failed: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open checkpoint " + path);
  return decode_checkpoint(std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>()));
}

}  // namespace smnet

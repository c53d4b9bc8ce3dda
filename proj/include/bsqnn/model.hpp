#pragma once
// Model description file parsing and network loading.
//
// File format (line oriented; '#' starts a comment):
//   input <H> <W> <C> bits=<n>
//   layer conv name=<id> out=<M> kernel=<k>|<kh>x<kw> stride=<s> pad=<p>
//         groups=<g> wbits=<w> wsigned=<0|1> bipolar=<0|1> weights=<file>
//         engine=<bitserial|byte>
//   layer fc name=<id> out=<N> wbits=... weights=... engine=...
//   layer maxpool name=<id> window=<k> stride=<s>
//   bn mu=<csv> sigma=<csv> gamma=<csv> beta=<csv>
//   alpha <csv>
//   quantize levels=<csv> thresholds=<csv>
// bn / alpha / quantize attach to the most recent conv or fc layer, in
// application order: matmul, alpha-scale, batch-norm, quantize. Loading
// streamlines all float parameters into integer thresholds.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "bsqnn/runtime.hpp"

namespace bsqnn {

struct QuantizeDef {
  std::vector<double> levels;
  std::vector<double> thresholds;
};

struct BatchNormDef {
  std::vector<double> mu, sigma, gamma, beta;
};

struct MatrixLayerDef {
  bool is_conv = false;
  std::string name;
  std::size_t out = 0;
  std::size_t k_h = 1, k_w = 1, stride = 1, pad = 0, groups = 1;
  int wbits = 1;
  bool wsigned = false;
  bool bipolar = false;
  std::string weights_path;
  Engine engine = Engine::BitSerial;
  std::optional<std::vector<double>> alpha;
  std::optional<BatchNormDef> bn;
  std::optional<QuantizeDef> quantize;
};

struct PoolLayerDef {
  std::string name;
  std::size_t window = 2, stride = 2;
};

struct ModelDef {
  std::size_t in_h = 0, in_w = 0, in_c = 0;
  int input_bits = 8;
  std::vector<std::variant<MatrixLayerDef, PoolLayerDef>> layers;
};

namespace detail {

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::vector<double> parse_csv(const std::string& s, int line) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t pos;
      out.push_back(std::stod(item, &pos));
      if (pos != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ParseError("line " + std::to_string(line) + ": bad number '" + item + "'");
    }
  }
  if (out.empty()) throw ParseError("line " + std::to_string(line) + ": empty value list");
  return out;
}

inline std::size_t parse_count(const std::string& s, int line, const std::string& key) {
  try {
    const long long v = std::stoll(s);
    if (v < 0) throw std::out_of_range(s);
    return std::size_t(v);
  } catch (const std::exception&) {
    throw ParseError("line " + std::to_string(line) + ": bad value for " + key + ": '" + s +
                     "'");
  }
}

inline std::map<std::string, std::string> parse_kv(const std::vector<std::string>& toks,
                                                   std::size_t from, int line) {
  std::map<std::string, std::string> kv;
  for (std::size_t i = from; i < toks.size(); i++) {
    const auto eq = toks[i].find('=');
    if (eq == std::string::npos)
      throw ParseError("line " + std::to_string(line) + ": expected key=value, got '" +
                       toks[i] + "'");
    kv[toks[i].substr(0, eq)] = toks[i].substr(eq + 1);
  }
  return kv;
}

}  // namespace detail

inline ModelDef parse_model(std::istream& is) {
  using detail::ParseError;
  ModelDef def;
  bool have_input = false;
  MatrixLayerDef* last_matrix = nullptr;
  std::string raw;
  int line = 0;
  int auto_name = 0;
  while (std::getline(is, raw)) {
    line++;
    const auto hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    std::stringstream ss(raw);
    std::vector<std::string> toks;
    std::string t;
    while (ss >> t) toks.push_back(t);
    if (toks.empty()) continue;

    if (toks[0] == "input") {
      if (toks.size() < 4) throw ParseError("line " + std::to_string(line) + ": input needs H W C");
      def.in_h = detail::parse_count(toks[1], line, "H");
      def.in_w = detail::parse_count(toks[2], line, "W");
      def.in_c = detail::parse_count(toks[3], line, "C");
      auto kv = detail::parse_kv(toks, 4, line);
      if (kv.count("bits")) def.input_bits = int(detail::parse_count(kv["bits"], line, "bits"));
      have_input = true;
    } else if (toks[0] == "layer") {
      if (toks.size() < 2) throw ParseError("line " + std::to_string(line) + ": layer needs a kind");
      const std::string& kind = toks[1];
      auto kv = detail::parse_kv(toks, 2, line);
      if (kind == "conv" || kind == "fc") {
        MatrixLayerDef m;
        m.is_conv = kind == "conv";
        m.name = kv.count("name") ? kv["name"] : kind + std::to_string(auto_name++);
        if (!kv.count("out") || !kv.count("weights"))
          throw ParseError("line " + std::to_string(line) + ": " + kind +
                           " requires out= and weights=");
        m.out = detail::parse_count(kv["out"], line, "out");
        m.weights_path = kv["weights"];
        if (m.is_conv) {
          std::string k = kv.count("kernel") ? kv["kernel"] : "1";
          const auto x = k.find('x');
          if (x == std::string::npos) {
            m.k_h = m.k_w = detail::parse_count(k, line, "kernel");
          } else {
            m.k_h = detail::parse_count(k.substr(0, x), line, "kernel");
            m.k_w = detail::parse_count(k.substr(x + 1), line, "kernel");
          }
          if (kv.count("stride")) m.stride = detail::parse_count(kv["stride"], line, "stride");
          if (kv.count("pad")) m.pad = detail::parse_count(kv["pad"], line, "pad");
          if (kv.count("groups")) m.groups = detail::parse_count(kv["groups"], line, "groups");
        }
        if (kv.count("wbits")) m.wbits = int(detail::parse_count(kv["wbits"], line, "wbits"));
        if (kv.count("wsigned")) m.wsigned = kv["wsigned"] != "0";
        if (kv.count("bipolar")) m.bipolar = kv["bipolar"] != "0";
        if (kv.count("engine")) {
          if (kv["engine"] == "bitserial")
            m.engine = Engine::BitSerial;
          else if (kv["engine"] == "byte")
            m.engine = Engine::Byte;
          else
            throw ParseError("line " + std::to_string(line) + ": unknown engine '" +
                             kv["engine"] + "'");
        }
        def.layers.emplace_back(std::move(m));
        last_matrix = &std::get<MatrixLayerDef>(def.layers.back());
      } else if (kind == "maxpool") {
        PoolLayerDef p;
        p.name = kv.count("name") ? kv["name"] : "pool" + std::to_string(auto_name++);
        if (kv.count("window")) p.window = detail::parse_count(kv["window"], line, "window");
        if (kv.count("stride")) p.stride = detail::parse_count(kv["stride"], line, "stride");
        def.layers.emplace_back(std::move(p));
        last_matrix = nullptr;
      } else {
        throw ParseError("line " + std::to_string(line) + ": unknown layer kind '" + kind +
                         "'");
      }
    } else if (toks[0] == "bn") {
      if (!last_matrix)
        throw ParseError("line " + std::to_string(line) + ": bn must follow a conv/fc layer");
      auto kv = detail::parse_kv(toks, 1, line);
      for (const char* key : {"mu", "sigma", "gamma", "beta"})
        if (!kv.count(key))
          throw ParseError("line " + std::to_string(line) + ": bn requires " + key + "=");
      BatchNormDef bn;
      bn.mu = detail::parse_csv(kv["mu"], line);
      bn.sigma = detail::parse_csv(kv["sigma"], line);
      bn.gamma = detail::parse_csv(kv["gamma"], line);
      bn.beta = detail::parse_csv(kv["beta"], line);
      last_matrix->bn = std::move(bn);
    } else if (toks[0] == "alpha") {
      if (!last_matrix || toks.size() < 2)
        throw ParseError("line " + std::to_string(line) +
                         ": alpha needs values and must follow a conv/fc layer");
      last_matrix->alpha = detail::parse_csv(toks[1], line);
    } else if (toks[0] == "quantize") {
      if (!last_matrix)
        throw ParseError("line " + std::to_string(line) +
                         ": quantize must follow a conv/fc layer");
      auto kv = detail::parse_kv(toks, 1, line);
      if (!kv.count("levels") || !kv.count("thresholds"))
        throw ParseError("line " + std::to_string(line) +
                         ": quantize requires levels= and thresholds=");
      QuantizeDef q;
      q.levels = detail::parse_csv(kv["levels"], line);
      q.thresholds = detail::parse_csv(kv["thresholds"], line);
      last_matrix->quantize = std::move(q);
    } else {
      throw ParseError("line " + std::to_string(line) + ": unknown directive '" + toks[0] +
                       "'");
    }
  }
  if (!have_input) throw ParseError("model has no input declaration");
  if (def.layers.empty()) throw ParseError("model has no layers");
  return def;
}

inline ModelDef parse_model_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open model file " + path);
  try {
    return parse_model(f);
  } catch (const detail::ParseError& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Network loading: reads weight containers, streamlines each layer's float
// post-ops (alpha, batch-norm, quantizer, plus the affine carried over from
// the previous layer's quantizer) into integer thresholds, and packs weights.
// ---------------------------------------------------------------------------

template <typename Word = uint64_t>
Network<Word> load_network(const ModelDef& def, const std::string& base_dir) {
  Network<Word> net;
  LinearTransform pending;  // maps threshold counts to the float activation scale
  int abits = def.input_bits;
  std::size_t cur_c = def.in_c;

  for (std::size_t li = 0; li < def.layers.size(); li++) {
    if (const PoolLayerDef* pd = std::get_if<PoolLayerDef>(&def.layers[li])) {
      // positive-scale affines commute with max; pending passes through
      net.layers.push_back(MaxPoolLayer{pd->name, pd->window, pd->stride});
      continue;
    }
    const MatrixLayerDef& md = std::get<MatrixLayerDef>(def.layers[li]);
    BitPlaneMatrix<Word> packed = load_packed<Word>(base_dir + "/" + md.weights_path);
    IntMatrix true_w = unpack(packed);
    if (md.bipolar) {
      if (packed.bits != 1 || !packed.is_signed)
        throw std::runtime_error(md.name + ": bipolar weights must be signed 1-bit planes");
      for (int32_t& v : true_w.data) v = 2 * v + 1;  // stored {0,-1} -> {-1,+1}
    }

    const std::size_t cg = md.is_conv ? cur_c / md.groups : cur_c;
    const std::size_t patch = md.is_conv ? md.k_h * md.k_w * cg : true_w.cols;
    if (true_w.rows != md.out || true_w.cols != patch)
      throw std::runtime_error(md.name + ": weight container is " +
                               std::to_string(true_w.rows) + "x" +
                               std::to_string(true_w.cols) + ", expected " +
                               std::to_string(md.out) + "x" + std::to_string(patch));

    // move the pending input-side affine past this layer's weights:
    // W*(a*x+b) = a*(W*x) + W*b, with b indexed per input channel
    if (!pending.uniform_scale())
      throw std::runtime_error(md.name + ": per-channel input scale cannot move past weights");
    LinearTransform moved;
    moved.scale = {pending.scale[0]};
    moved.shift.assign(md.out, 0.0);
    const std::size_t mg = md.out / (md.is_conv ? md.groups : 1);
    for (std::size_t r = 0; r < md.out; r++) {
      const std::size_t g = md.is_conv ? r / mg : 0;
      double s = 0.0;
      for (std::size_t col = 0; col < true_w.cols; col++) {
        const std::size_t ch = md.is_conv ? g * cg + (col % cg) : col;
        s += double(true_w.at(r, col)) * (pending.shift.size() == 1 ? pending.shift[0]
                                                                    : pending.shift_at(ch));
      }
      moved.shift[r] = s;
    }

    std::vector<LinearTransform> chain{moved};
    if (md.alpha) {
      if (md.alpha->size() != md.out)
        throw std::runtime_error(md.name + ": alpha size does not match output channels");
      chain.push_back(LinearTransform{*md.alpha, {0.0}});
    }
    if (md.bn) chain.push_back(batchnorm_to_affine(md.bn->mu, md.bn->sigma, md.bn->gamma,
                                                   md.bn->beta));
    LinearTransform collapsed = collapse_linear(chain);

    // the matrix layer itself
    if (md.is_conv) {
      ConvLayer<Word> cl;
      cl.name = md.name;
      cl.geom = ConvGeometry{0, 0, cur_c, md.k_h, md.k_w, md.stride, md.pad, md.out,
                             md.groups};
      cl.weights = std::move(true_w);
      cl.wbits = md.wbits;
      cl.wsigned = md.wsigned;
      cl.bipolar = md.bipolar;
      cl.abits = abits;
      cl.engine = md.engine;
      net.layers.push_back(std::move(cl));
    } else {
      FCLayer<Word> fl;
      fl.name = md.name;
      fl.weights = std::move(true_w);
      fl.wbits = md.wbits;
      fl.wsigned = md.wsigned;
      fl.bipolar = md.bipolar;
      fl.abits = abits;
      fl.engine = md.engine;
      net.layers.push_back(std::move(fl));
    }

    if (md.quantize) {
      Quantizer q{md.quantize->levels, md.quantize->thresholds};
      auto [ts, qlt] = quantizer_to_thresholds(q);
      ThresholdSet absorbed = absorb_into_thresholds(ts, collapsed);
      net.layers.push_back(ThresholdLayer{md.name + "_thres",
                                          round_thresholds_integer(absorbed)});
      pending = qlt;
      abits = int(std::ceil(std::log2(double(q.levels.size()))));
      if (abits < 1) abits = 1;
    } else {
      // no quantizer: the collapsed affine (which already folds the pending
      // input-side transform) is the network's residual output scale
      net.output_affine = collapsed;
      pending = LinearTransform{};
    }
    cur_c = md.out;
  }
  net.prepare();
  return net;
}

template <typename Word>
Network<Word> load_network_file(const std::string& model_path) {
  const auto slash = model_path.find_last_of('/');
  const std::string dir = slash == std::string::npos ? "." : model_path.substr(0, slash);
  return load_network<Word>(parse_model_file(model_path), dir);
}

}  // namespace bsqnn

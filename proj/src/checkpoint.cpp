#include "headprune/checkpoint.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "headprune/errors.hpp"
#include "headprune/format.hpp"

namespace headprune {

using nlohmann::json;

namespace {

void write_matrix(std::ostringstream& os, const Matrix& m) {
  os << "{\"rows\": " << m.rows() << ", \"cols\": " << m.cols() << ", \"data\": [";
  bool first = true;
  for (double v : m.values()) {
    if (!first) os << ", ";
    os << format_real(v);
    first = false;
  }
  os << "]}";
}

// Schema reader that remembers where it is, so errors name the offending field.
class Reader {
 public:
  Reader(const json& node, std::string path) : node_(node), path_(std::move(path)) {}

  Reader field(const std::string& key) const {
    if (!node_.is_object()) fail("expected an object");
    auto it = node_.find(key);
    if (it == node_.end()) throw ParseError("checkpoint: missing field " + join(key));
    return Reader(*it, join(key));
  }

  Reader index(std::size_t i) const {
    return Reader(node_.at(i), path_ + "[" + std::to_string(i) + "]");
  }

  std::size_t array_size() const {
    if (!node_.is_array()) fail("expected an array");
    return node_.size();
  }

  std::size_t as_size() const {
    if (!node_.is_number_unsigned()) fail("expected a non-negative integer");
    return node_.get<std::size_t>();
  }

  bool as_bool() const {
    if (!node_.is_boolean()) fail("expected a boolean");
    return node_.get<bool>();
  }

  double as_real() const {
    if (!node_.is_number()) fail("expected a number");
    const double v = node_.get<double>();
    if (!std::isfinite(v)) fail("non-finite number");
    return v;
  }

  Matrix as_matrix(std::size_t rows, std::size_t cols) const {
    const std::size_t r = field("rows").as_size();
    const std::size_t c = field("cols").as_size();
    if (r != rows || c != cols) {
      fail("shape " + std::to_string(r) + "x" + std::to_string(c) + ", expected " +
           std::to_string(rows) + "x" + std::to_string(cols));
    }
    Reader data = field("data");
    if (data.array_size() != r * c) data.fail("length does not match rows*cols");
    std::vector<double> values(r * c);
    for (std::size_t i = 0; i < values.size(); ++i) values[i] = data.index(i).as_real();
    return Matrix(r, c, std::move(values));
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError("checkpoint: " + path_ + ": " + what);
  }

 private:
  std::string join(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json& node_;
  std::string path_;
};

}  // namespace

std::string checkpoint_to_string(const EncoderModel& model) {
  const auto& cfg = model.config();
  const auto& p = model.params();
  std::ostringstream os;
  os << "{\n  \"config\": {"
     << "\"num_layers\": " << cfg.num_layers << ", \"heads_per_layer\": " << cfg.heads_per_layer
     << ", \"model_dim\": " << cfg.model_dim << ", \"head_dim\": " << cfg.head_dim
     << ", \"vocab_size\": " << cfg.vocab_size << ", \"num_classes\": " << cfg.num_classes
     << ", \"tied_layers\": " << (cfg.tied_layers ? "true" : "false")
     << ", \"max_seq_len\": " << cfg.max_seq_len << "},\n";
  os << "  \"embedding\": ";
  write_matrix(os, p.embedding);
  os << ",\n  \"layers\": [";
  for (std::size_t b = 0; b < p.blocks.size(); ++b) {
    const auto& block = p.blocks[b];
    os << (b ? ",\n" : "\n") << "    {\"heads\": [";
    for (std::size_t h = 0; h < block.heads.size(); ++h) {
      os << (h ? ",\n" : "\n") << "      {\"w_q\": ";
      write_matrix(os, block.heads[h].w_q);
      os << ",\n       \"w_k\": ";
      write_matrix(os, block.heads[h].w_k);
      os << ",\n       \"w_v\": ";
      write_matrix(os, block.heads[h].w_v);
      os << "}";
    }
    os << "],\n     \"w_o\": ";
    write_matrix(os, block.w_o);
    os << "}";
  }
  os << "],\n  \"classifier\": {\"weight\": ";
  write_matrix(os, p.classifier_weight);
  os << ",\n                 \"bias\": ";
  write_matrix(os, p.classifier_bias);
  os << "},\n  \"head_index_map\": [";
  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    os << (l ? ", " : "") << "[";
    const auto& ids = model.layer(l).head_ids;
    for (std::size_t i = 0; i < ids.size(); ++i) os << (i ? ", " : "") << ids[i] + 1;
    os << "]";
  }
  os << "]\n}\n";
  return os.str();
}

EncoderModel checkpoint_from_string(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError("checkpoint: syntax error at byte " + std::to_string(e.byte) + ": " + e.what());
  }
  Reader root(doc, "");
  Reader c = root.field("config");
  EncoderConfig cfg;
  cfg.num_layers = c.field("num_layers").as_size();
  cfg.heads_per_layer = c.field("heads_per_layer").as_size();
  cfg.model_dim = c.field("model_dim").as_size();
  cfg.head_dim = c.field("head_dim").as_size();
  cfg.vocab_size = c.field("vocab_size").as_size();
  cfg.num_classes = c.field("num_classes").as_size();
  cfg.tied_layers = c.field("tied_layers").as_bool();
  cfg.max_seq_len = c.field("max_seq_len").as_size();
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw ParseError(std::string("checkpoint: config: ") + e.what());
  }

  Parameters p;
  p.embedding = root.field("embedding").as_matrix(cfg.vocab_size, cfg.model_dim);

  Reader index_map = root.field("head_index_map");
  if (index_map.array_size() != cfg.num_layers) index_map.fail("expected one entry per layer");
  std::vector<std::vector<std::size_t>> ids(cfg.num_layers);
  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    Reader row = index_map.index(l);
    for (std::size_t i = 0; i < row.array_size(); ++i) {
      const std::size_t one_based = row.index(i).as_size();
      if (one_based < 1 || one_based > cfg.heads_per_layer) row.index(i).fail("head index out of range");
      if (!ids[l].empty() && one_based - 1 <= ids[l].back()) row.fail("head indices not increasing");
      ids[l].push_back(one_based - 1);
    }
    if (cfg.tied_layers && ids[l] != ids[0]) row.fail("tied layers must share one head set");
  }

  Reader layers = root.field("layers");
  const std::size_t expected_blocks = cfg.tied_layers ? 1 : cfg.num_layers;
  if (layers.array_size() != expected_blocks) {
    layers.fail("expected " + std::to_string(expected_blocks) + " parameter sets");
  }
  for (std::size_t b = 0; b < expected_blocks; ++b) {
    Reader lr = layers.index(b);
    Reader heads = lr.field("heads");
    LayerParams layer;
    layer.head_ids = ids[b];
    if (heads.array_size() != layer.head_ids.size()) heads.fail("head count != head_index_map entry");
    for (std::size_t h = 0; h < layer.head_ids.size(); ++h) {
      Reader hr = heads.index(h);
      layer.heads.push_back({hr.field("w_q").as_matrix(cfg.model_dim, cfg.head_dim),
                             hr.field("w_k").as_matrix(cfg.model_dim, cfg.head_dim),
                             hr.field("w_v").as_matrix(cfg.model_dim, cfg.head_dim)});
    }
    layer.w_o = lr.field("w_o").as_matrix(layer.head_ids.size() * cfg.head_dim, cfg.model_dim);
    p.blocks.push_back(std::move(layer));
  }

  Reader cls = root.field("classifier");
  p.classifier_weight = cls.field("weight").as_matrix(cfg.model_dim, cfg.num_classes);
  p.classifier_bias = cls.field("bias").as_matrix(1, cfg.num_classes);
  return EncoderModel(cfg, std::move(p));
}

void save_checkpoint(const EncoderModel& model, const std::filesystem::path& path) {
  const std::string text = checkpoint_to_string(model);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out << text;
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into " + path.string() + ": " + ec.message());
}

EncoderModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return checkpoint_from_string(buf.str());
}

}  // namespace headprune

#include "grunt/learn/checkpoint.hpp"

#include <cstring>

#include "grunt/io.hpp"

namespace grunt {

using ojson = nlohmann::ordered_json;

namespace {

void put_le(std::vector<std::uint8_t>& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_le(std::span<const std::uint8_t> in, std::size_t at, int bytes) {
  if (at + static_cast<std::size_t>(bytes) > in.size()) throw FormatError("checkpoint: truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= std::uint64_t{in[at + static_cast<std::size_t>(i)]} << (8 * i);
  return v;
}

void append_standardizer(std::vector<double>& out, const Standardizer& s) {
  out.insert(out.end(), s.mean.data(), s.mean.data() + s.mean.size());
  out.insert(out.end(), s.std.data(), s.std.data() + s.std.size());
}

Standardizer read_standardizer(const Vector& params, Eigen::Index offset, Eigen::Index dims) {
  Standardizer s;
  if (dims == 0) return s;
  if (offset + 2 * dims != params.size()) throw FormatError("checkpoint: standardizer does not fit the parameters");
  s.mean = params.segment(offset, dims);
  s.std = params.segment(offset + dims, dims);
  return s;
}

void merge(ojson& config, const ojson& extra) {
  for (auto it = extra.begin(); it != extra.end(); ++it) config[it.key()] = it.value();
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c) {
  const std::string text = c.config.dump();
  std::vector<std::uint8_t> out;
  for (char ch : std::string_view("GMDL")) out.push_back(static_cast<std::uint8_t>(ch));
  put_le(out, kCheckpointVersion, 2);
  put_le(out, text.size(), 4);
  out.insert(out.end(), text.begin(), text.end());
  put_le(out, static_cast<std::uint64_t>(c.params.size()), 8);
  for (Eigen::Index i = 0; i < c.params.size(); ++i) {
    std::uint64_t bits;
    std::memcpy(&bits, c.params.data() + i, sizeof bits);
    put_le(out, bits, 8);
  }
  return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "GMDL", 4) != 0) throw FormatError("checkpoint: bad magic");
  const auto version = get_le(bytes, 4, 2);
  if (version != kCheckpointVersion) throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  const auto len = static_cast<std::size_t>(get_le(bytes, 6, 4));
  if (10 + len > bytes.size()) throw FormatError("checkpoint: truncated config");
  Checkpoint c;
  try {
    c.config = ojson::parse(bytes.begin() + 10, bytes.begin() + static_cast<std::ptrdiff_t>(10 + len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: bad config JSON: ") + e.what());
  }
  const std::size_t at = 10 + len;
  const auto n = get_le(bytes, at, 8);
  if (n > (bytes.size() - at - 8) / 8) throw FormatError("checkpoint: truncated parameters");
  if (at + 8 + 8 * n != bytes.size()) throw FormatError("checkpoint: trailing bytes");
  c.params.resize(static_cast<Eigen::Index>(n));
  for (std::uint64_t i = 0; i < n; ++i) {
    const std::uint64_t bits = get_le(bytes, at + 8 + 8 * i, 8);
    std::memcpy(c.params.data() + i, &bits, sizeof bits);
  }
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  write_file_atomic(path, encode_checkpoint(c));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

Checkpoint svm_checkpoint(const SvmModel& model, const ojson& extra) {
  Checkpoint c;
  c.config["model"] = "svm";
  c.config["dims"] = model.weights.size();
  c.config["c"] = model.c_value;
  c.config["standardizer_dims"] = model.standardizer.dims();
  merge(c.config, extra);
  std::vector<double> p(model.weights.data(), model.weights.data() + model.weights.size());
  p.push_back(model.bias);
  append_standardizer(p, model.standardizer);
  c.params = Eigen::Map<const Vector>(p.data(), static_cast<Eigen::Index>(p.size()));
  return c;
}

SvmModel svm_from_checkpoint(const Checkpoint& c) {
  try {
    if (c.config.at("model").get<std::string>() != "svm") throw FormatError("checkpoint: not an svm model");
    const auto dims = c.config.at("dims").get<Eigen::Index>();
    if (c.params.size() < dims + 1) throw FormatError("checkpoint: svm parameters truncated");
    SvmModel m;
    m.weights = c.params.head(dims);
    m.bias = c.params(dims);
    m.c_value = c.config.at("c").get<double>();
    m.standardizer = read_standardizer(c.params, dims + 1, c.config.at("standardizer_dims").get<Eigen::Index>());
    if (m.standardizer.empty() && c.params.size() != dims + 1) throw FormatError("checkpoint: trailing svm parameters");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
}

ojson net_config_json(const NetConfig& config) {
  ojson j;
  j["architecture"] = to_string(config.architecture);
  j["time_steps"] = config.time_steps;
  j["features"] = config.features;
  auto& blocks = j["conv_blocks"] = ojson::array();
  for (const auto& b : config.conv_blocks) {
    blocks.push_back({{"filters", b.filters}, {"kernel", b.kernel}, {"pool", b.pool}, {"dropout", b.dropout}});
  }
  j["lstm_hidden"] = config.lstm_hidden;
  j["lstm_layers"] = config.lstm_layers;
  j["bidirectional"] = config.bidirectional;
  j["n_classes"] = config.n_classes;
  return j;
}

NetConfig net_config_from_json(const ojson& j) {
  NetConfig c;
  c.architecture = parse_architecture(j.at("architecture").get<std::string>());
  c.time_steps = j.at("time_steps").get<int>();
  c.features = j.at("features").get<int>();
  for (const auto& b : j.at("conv_blocks")) {
    c.conv_blocks.push_back({b.at("filters").get<int>(), b.at("kernel").get<int>(), b.at("pool").get<int>(),
                             b.at("dropout").get<double>()});
  }
  c.lstm_hidden = j.at("lstm_hidden").get<int>();
  c.lstm_layers = j.at("lstm_layers").get<int>();
  c.bidirectional = j.at("bidirectional").get<bool>();
  c.n_classes = j.at("n_classes").get<int>();
  c.validate();
  return c;
}

Checkpoint net_checkpoint(const NetModel& model, const ojson& extra) {
  Checkpoint c;
  c.config["model"] = to_string(model.params.config().architecture);
  c.config["net"] = net_config_json(model.params.config());
  c.config["net_params"] = model.params.size();
  c.config["standardizer_dims"] = model.standardizer.dims();
  merge(c.config, extra);
  std::vector<double> p(model.params.flat().data(), model.params.flat().data() + model.params.size());
  append_standardizer(p, model.standardizer);
  c.params = Eigen::Map<const Vector>(p.data(), static_cast<Eigen::Index>(p.size()));
  return c;
}

NetModel net_from_checkpoint(const Checkpoint& c) {
  try {
    const NetConfig config = net_config_from_json(c.config.at("net"));
    NetModel m{NetParams(config), {}};
    const auto n = m.params.size();
    if (c.config.at("net_params").get<Eigen::Index>() != n || c.params.size() < n) {
      throw FormatError("checkpoint: parameter count does not match the network config");
    }
    m.params.flat() = c.params.head(n);
    m.standardizer = read_standardizer(c.params, n, c.config.at("standardizer_dims").get<Eigen::Index>());
    if (m.standardizer.empty() && c.params.size() != n) throw FormatError("checkpoint: trailing net parameters");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  } catch (const ArgumentError& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
}

}  // namespace grunt

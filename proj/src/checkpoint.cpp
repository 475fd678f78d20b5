#include "fspc/checkpoint.hpp"

#include "fspc/config.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace fspc {

using nlohmann::json;

namespace {

template <class T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  std::uint64_t bits = 0;
  static_assert(sizeof(T) == sizeof(bits));
  std::memcpy(&bits, &value, sizeof(bits));
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
}

template <class T>
T get_le(const std::uint8_t* in) {
  std::uint64_t bits = 0;
  for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(in[b]) << (8 * b);
  T value;
  std::memcpy(&value, &bits, sizeof(value));
  return value;
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const ModelConfig& config, const ModelParameters& params,
                                               const json& meta) {
  json tensors = json::object();
  std::vector<const Matrix*> order;
  std::uint64_t offset = 0;
  visit_model_tensors(params, [&](const std::string& name, const Matrix& m, bool) {
    tensors[name] = {{"shape", {m.rows(), m.cols()}}, {"offset", offset}};
    offset += static_cast<std::uint64_t>(m.size()) * 8;
    order.push_back(&m);
  });
  const json header{{"format_version", 1}, {"config", to_json(config)}, {"meta", meta}, {"tensors", tensors}};
  const std::string text = header.dump();

  std::vector<std::uint8_t> out(kCheckpointMagic, kCheckpointMagic + 8);
  put_le<std::uint64_t>(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  out.reserve(out.size() + offset);
  for (const Matrix* m : order) {
    for (Eigen::Index i = 0; i < m->size(); ++i) put_le<double>(out, m->data()[i]);
  }
  return out;
}

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0) {
    throw_data("not a checkpoint (bad magic)");
  }
  const auto header_len = get_le<std::uint64_t>(bytes.data() + 8);
  if (header_len > bytes.size() - 16) throw_data("truncated checkpoint header");
  json header;
  try {
    header = json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(header_len));
  } catch (const json::exception& e) {
    throw_data(std::string("malformed checkpoint header: ") + e.what());
  }
  const std::size_t data_start = 16 + header_len;

  Checkpoint ck;
  try {
    ck.config = model_config_from_json(header.at("config"));
    ck.meta = header.value("meta", json::object());
  } catch (const json::exception& e) {
    throw_data(std::string("malformed checkpoint config: ") + e.what());
  } catch (const Error& e) {
    throw_data(std::string("malformed checkpoint config: ") + e.what());
  }
  ck.params = init_model(ck.config, 0);
  const json& tensors = header.at("tensors");
  std::size_t seen = 0;
  visit_model_tensors(ck.params, [&](const std::string& name, Matrix& m, bool) {
    if (!tensors.contains(name)) throw_data("checkpoint is missing tensor " + name);
    const json& t = tensors.at(name);
    const auto rows = t.at("shape").at(0).get<Eigen::Index>();
    const auto cols = t.at("shape").at(1).get<Eigen::Index>();
    if (rows != m.rows() || cols != m.cols()) throw_data("shape mismatch for tensor " + name);
    const auto off = t.at("offset").get<std::uint64_t>();
    if (off + static_cast<std::uint64_t>(m.size()) * 8 > bytes.size() - data_start) {
      throw_data("truncated checkpoint data for tensor " + name);
    }
    const std::uint8_t* p = bytes.data() + data_start + off;
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = get_le<double>(p + 8 * i);
    ++seen;
  });
  if (seen != tensors.size()) throw_data("checkpoint has tensors this model does not use");
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config, const ModelParameters& params,
                     const json& meta) {
  const std::vector<std::uint8_t> bytes = serialize_checkpoint(config, params, meta);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw_data("cannot write checkpoint: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw_data("cannot write checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw_data("checkpoint not found: " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace fspc

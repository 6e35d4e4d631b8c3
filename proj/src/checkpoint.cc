// Copyright 2026 The avunify Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "avu/checkpoint.h"

#include <cstring>
#include <fstream>
#include <vector>

#include "avu/errors.h"
#include "json.hpp"

namespace avu {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr char kMagic[8] = {'A', 'V', 'U', 'C', 'K', 'P', 'T', '\0'};

template <typename T>
void write_le(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

}  // namespace

void save_checkpoint(const fs::path& path, const Checkpoint& c) {
  json header;
  header["config"] = c.config_json.empty() ? json::object()
                                           : json::parse(c.config_json);
  header["epoch"] = c.epoch;
  header["step"] = c.step;
  header["rng_state"] = c.rng_state;
  header["adam_steps"] = c.adam_steps;
  header["trained_components"] = c.trained_components;
  json tensors = json::array();
  std::uint64_t offset = 0;
  std::vector<const Eigen::MatrixXf*> blobs;
  auto add = [&](const char* group, const std::map<std::string, Eigen::MatrixXf>& m) {
    for (const auto& [name, t] : m) {
      tensors.push_back({{"name", name},
                         {"group", group},
                         {"rows", t.rows()},
                         {"cols", t.cols()},
                         {"offset", offset}});
      offset += static_cast<std::uint64_t>(t.size()) * sizeof(float);
      blobs.push_back(&t);
    }
  };
  add("param", c.params);
  add("adam_m", c.adam_m);
  add("adam_v", c.adam_v);
  header["tensors"] = std::move(tensors);
  const std::string text = header.dump();

  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw Error("cannot write checkpoint '" + path.string() + "'");
    os.write(kMagic, sizeof(kMagic));
    write_le<std::uint32_t>(os, kCheckpointVersion);
    write_le<std::uint64_t>(os, text.size());
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto* t : blobs)
      os.write(reinterpret_cast<const char*>(t->data()),
               static_cast<std::streamsize>(t->size() * sizeof(float)));
    if (!os) throw Error("short write to '" + path.string() + "'");
  }
  fs::rename(tmp, path);
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open checkpoint '" + path.string() + "'");
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw InputError("'" + path.string() + "' is not a checkpoint");
  const auto version = read_le<std::uint32_t>(is);
  if (version != kCheckpointVersion)
    throw InputError("checkpoint version " + std::to_string(version) +
                     " is not supported");
  const auto header_bytes = read_le<std::uint64_t>(is);
  std::string text(header_bytes, '\0');
  is.read(text.data(), static_cast<std::streamsize>(header_bytes));
  if (!is) throw InputError("truncated checkpoint header");
  const std::streampos blob_start = is.tellg();

  Checkpoint c;
  try {
    const json header = json::parse(text);
    c.config_json = header.at("config").dump();
    c.epoch = header.at("epoch").get<int>();
    c.step = header.at("step").get<std::int64_t>();
    c.rng_state = header.at("rng_state").get<std::string>();
    c.adam_steps = header.at("adam_steps").get<std::int64_t>();
    c.trained_components =
        header.at("trained_components").get<std::set<std::string>>();
    for (const auto& t : header.at("tensors")) {
      Eigen::MatrixXf m(t.at("rows").get<Eigen::Index>(),
                        t.at("cols").get<Eigen::Index>());
      is.seekg(blob_start + static_cast<std::streamoff>(
                                t.at("offset").get<std::uint64_t>()));
      is.read(reinterpret_cast<char*>(m.data()),
              static_cast<std::streamsize>(m.size() * sizeof(float)));
      if (!is) throw InputError("truncated checkpoint tensor data");
      const std::string group = t.at("group").get<std::string>();
      const std::string name = t.at("name").get<std::string>();
      if (group == "param") c.params[name] = std::move(m);
      else if (group == "adam_m") c.adam_m[name] = std::move(m);
      else if (group == "adam_v") c.adam_v[name] = std::move(m);
      else throw InputError("unknown tensor group '" + group + "'");
    }
  } catch (const json::exception& e) {
    throw InputError("corrupt checkpoint header: " + std::string(e.what()));
  }
  return c;
}

Checkpoint capture(AvModel& model, const nn::Adam* adam) {
  Checkpoint c;
  for (const auto* p : model.parameters()) c.params[p->name] = p->value;
  if (adam) {
    c.adam_steps = adam->steps();
    for (auto& [name, m] : adam->first_moments()) c.adam_m[name] = std::move(m);
    for (auto& [name, v] : adam->second_moments()) c.adam_v[name] = std::move(v);
  }
  return c;
}

std::set<Component> restore_parameters(AvModel& model, const Checkpoint& c) {
  std::set<Component> missing;
  for (auto* p : model.parameters()) {
    const auto it = c.params.find(p->name);
    if (it == c.params.end()) {
      missing.insert(model.component_of(p->name));
      continue;
    }
    if (it->second.rows() != p->value.rows() ||
        it->second.cols() != p->value.cols())
      throw ConfigError("checkpoint tensor '" + p->name + "' has shape " +
                        std::to_string(it->second.rows()) + "x" +
                        std::to_string(it->second.cols()) + ", model expects " +
                        std::to_string(p->value.rows()) + "x" +
                        std::to_string(p->value.cols()));
    p->value = it->second;
  }
  return missing;
}

void restore_optimizer(nn::Adam& adam, const Checkpoint& c) {
  adam.set_steps(c.adam_steps);
  for (const auto& [name, m] : c.adam_m) {
    const auto v = c.adam_v.find(name);
    if (v == c.adam_v.end())
      throw InputError("checkpoint lacks second moment of '" + name + "'");
    adam.set_moments(name, m, v->second);
  }
}

void remove_component(Checkpoint& c, Component component) {
  const std::string prefix = to_string(component) + ".";
  for (auto* m : {&c.params, &c.adam_m, &c.adam_v})
    std::erase_if(*m, [&](const auto& kv) { return kv.first.rfind(prefix, 0) == 0; });
}

}  // namespace avu

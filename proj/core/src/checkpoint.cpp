// SPDX-License-Identifier: Apache-2.0
#include "mmrf/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "json.hpp"

namespace mmrf {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void append_le(std::vector<char>& out, std::span<const float> values) {
  for (float f : values) {
    auto bits = std::bit_cast<std::uint32_t>(f);
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xffu));
  }
}

void read_le(const std::vector<char>& in, std::int64_t offset, std::span<float> out) {
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) {
      bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[static_cast<std::size_t>(offset + static_cast<std::int64_t>(i)) * 4 + b]))
              << (8 * b);
    }
    out[i] = std::bit_cast<float>(bits);
  }
}

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot write " + path.string());
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error("short write to " + path.string());
}

std::vector<char> read_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("checkpoint file missing: " + path.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

Shape parse_shape(const json& j, const std::string& name) {
  if (!j.is_array()) throw DataError("manifest: shape of '" + name + "' is not an array");
  Shape s;
  for (const auto& d : j) {
    if (!d.is_number_integer() || d.get<std::int64_t>() < 0) {
      throw DataError("manifest: bad dimension in shape of '" + name + "'");
    }
    s.push_back(d.get<std::int64_t>());
  }
  return s;
}

Tensor take(const std::vector<char>& bytes, std::int64_t offset, const Shape& shape, const std::string& what) {
  const std::int64_t n = shape_numel(shape);
  if (offset < 0 || (offset + n) * 4 > static_cast<std::int64_t>(bytes.size())) {
    throw DataError("checkpoint size mismatch: '" + what + "' needs floats [" + std::to_string(offset) + ", " +
                    std::to_string(offset + n) + ") but file holds " + std::to_string(bytes.size() / 4));
  }
  Tensor t(shape);
  read_le(bytes, offset, t.values());
  return t;
}

}  // namespace

void save_checkpoint(const ParamStore& store, const OptState& opt, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create checkpoint directory " + dir.string() + ": " + ec.message());

  std::vector<char> params;
  json manifest;
  manifest["format"] = kCheckpointFormat;
  manifest["dtype"] = "f32le";
  json entries = json::array();
  for (const auto& [name, t] : store) {
    entries.push_back({{"name", name}, {"shape", t.shape()}, {"offset", params.size() / 4}});
    append_le(params, t.values());
  }
  manifest["params"] = entries;
  manifest["params_floats"] = params.size() / 4;

  std::vector<char> optbytes;
  json groups = json::array();
  for (const auto& [group, state] : opt.groups) {
    json ge = json::array();
    for (const auto& [name, m] : state.m) {
      const Tensor& v = state.v.at(name);
      const std::size_t m_off = optbytes.size() / 4;
      append_le(optbytes, m.values());
      const std::size_t v_off = optbytes.size() / 4;
      append_le(optbytes, v.values());
      ge.push_back({{"name", name}, {"shape", m.shape()}, {"m_offset", m_off}, {"v_offset", v_off}});
    }
    groups.push_back({{"name", group}, {"t", state.t}, {"entries", ge}});
  }
  manifest["optstate"] = {{"groups", groups}, {"floats", optbytes.size() / 4}};

  write_file(dir / "params.bin", std::string(params.begin(), params.end()));
  write_file(dir / "optstate.bin", std::string(optbytes.begin(), optbytes.end()));
  write_file(dir / "manifest.json", manifest.dump(1) + "\n");
}

std::pair<ParamStore, OptState> load_checkpoint(const fs::path& dir) {
  const auto mbytes = read_file(dir / "manifest.json");
  json manifest;
  try {
    manifest = json::parse(mbytes.begin(), mbytes.end());
  } catch (const json::exception& e) {
    throw DataError("corrupt checkpoint manifest " + (dir / "manifest.json").string() + ": " + e.what());
  }
  try {
    if (manifest.value("format", "") != kCheckpointFormat) {
      throw DataError("checkpoint format mismatch: expected " + std::string(kCheckpointFormat));
    }
    if (manifest.value("dtype", "") != "f32le") throw DataError("checkpoint dtype must be f32le");

    const auto params = read_file(dir / "params.bin");
    const auto expected = manifest.at("params_floats").get<std::int64_t>();
    if (static_cast<std::int64_t>(params.size()) != expected * 4) {
      throw DataError("checkpoint size mismatch: params.bin has " + std::to_string(params.size()) +
                      " bytes, manifest expects " + std::to_string(expected * 4));
    }
    ParamStore store;
    for (const auto& e : manifest.at("params")) {
      const auto name = e.at("name").get<std::string>();
      if (store.contains(name)) throw DataError("manifest: duplicate parameter '" + name + "'");
      store.set(name, take(params, e.at("offset").get<std::int64_t>(), parse_shape(e.at("shape"), name), name));
    }

    const auto optbytes = read_file(dir / "optstate.bin");
    const auto& os = manifest.at("optstate");
    if (static_cast<std::int64_t>(optbytes.size()) != os.at("floats").get<std::int64_t>() * 4) {
      throw DataError("checkpoint size mismatch: optstate.bin has " + std::to_string(optbytes.size()) + " bytes");
    }
    OptState opt;
    for (const auto& g : os.at("groups")) {
      AdamState st;
      st.t = g.at("t").get<std::int64_t>();
      for (const auto& e : g.at("entries")) {
        const auto name = e.at("name").get<std::string>();
        const Shape shape = parse_shape(e.at("shape"), name);
        st.m.set(name, take(optbytes, e.at("m_offset").get<std::int64_t>(), shape, name + " (m)"));
        st.v.set(name, take(optbytes, e.at("v_offset").get<std::int64_t>(), shape, name + " (v)"));
      }
      opt.groups.emplace(g.at("name").get<std::string>(), std::move(st));
    }
    return {std::move(store), std::move(opt)};
  } catch (const json::exception& e) {
    throw DataError("corrupt checkpoint manifest: " + std::string(e.what()));
  }
}

}  // namespace mmrf

#include <cstdio>
#include <sstream>

#include "aerosdf/common/binary_io.hpp"
#include "aerosdf/training.hpp"

namespace aerosdf::training {

void Checkpoint::set(const std::string& key, const std::string& value) {
  if (key.empty() || key.find_first_of("=\n") != std::string::npos || value.find('\n') != std::string::npos) {
    throw Error("invalid checkpoint metadata key '" + key + "'");
  }
  for (auto& [k, v] : meta) {
    if (k == key) {
      v = value;
      return;
    }
  }
  meta.emplace_back(key, value);
}

bool Checkpoint::has(const std::string& key) const {
  for (const auto& kv : meta) {
    if (kv.first == key) return true;
  }
  return false;
}

const std::string& Checkpoint::get(const std::string& key) const {
  for (const auto& [k, v] : meta) {
    if (k == key) return v;
  }
  throw Error("checkpoint has no '" + key + "' entry");
}

const NamedArray* Checkpoint::find(const std::string& name) const {
  for (const auto& a : arrays) {
    if (a.name == name) return &a;
  }
  return nullptr;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& checkpoint) {
  io::Writer out;
  out.put_bytes("CKPT");
  out.put(kCheckpointVersion);
  std::string text;
  for (const auto& [k, v] : checkpoint.meta) text += k + "=" + v + "\n";
  out.put_string(text);
  out.put(static_cast<std::uint32_t>(checkpoint.arrays.size()));
  for (const auto& a : checkpoint.arrays) {
    if (a.shape.size() > 255) throw Error("array '" + a.name + "' has too many axes");
    if (ad::shape_size(a.shape) != a.values.size()) throw ShapeError("array '" + a.name + "' size mismatch");
    out.put_string(a.name);
    out.put(static_cast<std::uint8_t>(a.shape.size()));
    for (auto e : a.shape) out.put(static_cast<std::uint32_t>(e));
    out.put_array(std::span<const float>(a.values));
  }
  return out.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  io::Reader in(bytes);
  if (in.get_bytes(4, "magic") != "CKPT") throw ParseError("bad magic, expected 'CKPT'", 0, ParseError::Unit::kByte);
  const auto version = in.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw ParseError("unsupported checkpoint version " + std::to_string(version), 4, ParseError::Unit::kByte);
  }
  Checkpoint ckpt;
  const std::size_t text_at = in.offset();
  std::istringstream text(in.get_string("config text"));
  for (std::string line; std::getline(text, line);) {
    const auto eq = line.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ParseError("malformed config line '" + line + "'", text_at, ParseError::Unit::kByte);
    }
    ckpt.meta.emplace_back(line.substr(0, eq), line.substr(eq + 1));
  }
  const auto count = in.get<std::uint32_t>("array count");
  for (std::uint32_t a = 0; a < count; ++a) {
    NamedArray arr;
    arr.name = in.get_string("array name");
    const auto rank = in.get<std::uint8_t>("array rank");
    std::size_t total = 1;
    for (std::uint8_t r = 0; r < rank; ++r) {
      const auto e = in.get<std::uint32_t>("array extent");
      arr.shape.push_back(e);
      if (e != 0 && total > in.remaining() / e) {
        throw ParseError("array '" + arr.name + "' extents exceed the file size", in.offset(), ParseError::Unit::kByte);
      }
      total *= e;
    }
    if (total > in.remaining() / sizeof(float)) {
      throw ParseError("truncated input while reading array '" + arr.name + "'", bytes.size(),
                       ParseError::Unit::kByte);
    }
    arr.values.resize(total);
    in.get_array(std::span<float>(arr.values), "array values");
    ckpt.arrays.push_back(std::move(arr));
  }
  if (in.remaining() != 0) throw ParseError("trailing bytes after checkpoint", in.offset(), ParseError::Unit::kByte);
  return ckpt;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  io::write_file(path, encode_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(io::read_file(path)); }

namespace {

std::string exact(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

NamedArray named(const std::string& name, const Tensor<float>& t) {
  return {name, t.shape(), std::vector<float>(t.values().begin(), t.values().end())};
}

void load_into(Tensor<float>& target, const Checkpoint& ckpt, const std::string& name) {
  const NamedArray* a = ckpt.find(name);
  if (!a) throw Error("checkpoint lacks array '" + name + "'");
  if (a->shape != target.shape()) {
    throw ShapeError("checkpoint array '" + name + "' has shape " + ad::shape_string(a->shape) + ", model expects " +
                     ad::shape_string(target.shape()));
  }
  std::copy(a->values.begin(), a->values.end(), target.data());
}

std::size_t to_size(const Checkpoint& ckpt, const std::string& key) {
  const std::string& v = ckpt.get(key);
  try {
    std::size_t used = 0;
    const auto n = std::stoull(v, &used);
    if (used != v.size()) throw Error("");
    return n;
  } catch (const std::exception&) {
    throw Error("checkpoint entry " + key + "='" + v + "' is not an integer");
  }
}

double to_double(const Checkpoint& ckpt, const std::string& key) {
  const std::string& v = ckpt.get(key);
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw Error("");
    return d;
  } catch (const std::exception&) {
    throw Error("checkpoint entry " + key + "='" + v + "' is not a number");
  }
}

}  // namespace

Checkpoint make_checkpoint(const unet::UNetModel<float>& model, const OptimizerState<float>* optimizer) {
  const auto& c = model.config();
  Checkpoint ckpt;
  ckpt.set("model.nx", std::to_string(c.dims[0]));
  ckpt.set("model.ny", std::to_string(c.dims[1]));
  ckpt.set("model.nz", std::to_string(c.dims[2]));
  ckpt.set("model.base_width", std::to_string(c.base_width));
  ckpt.set("model.channel_multiplier", std::to_string(c.channel_multiplier));
  ckpt.set("model.max_width", std::to_string(c.max_width));
  ckpt.set("model.depth", std::to_string(c.depth));
  ckpt.set("model.kernel", std::to_string(c.kernel));
  ckpt.set("model.dilation", std::to_string(c.dilation));
  ckpt.set("model.se_reduction", std::to_string(c.se_reduction));
  ckpt.set("model.head_width", std::to_string(c.head_width));
  ckpt.set("model.dropout", exact(c.dropout));
  ckpt.set("model.predict_fields", c.predict_fields ? "1" : "0");
  ckpt.set("model.seed", std::to_string(c.seed));
  ckpt.set("model.cd_offset", exact(c.cd_offset));
  ckpt.set("model.cd_scale", exact(c.cd_scale));
  const auto& params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) ckpt.arrays.push_back(named(params.name(i), params.value(i)));
  const auto& stats = model.batch_stats();
  for (std::size_t i = 0; i < stats.size(); ++i) {
    ckpt.arrays.push_back(named("stats." + stats.name(i) + ".mean", stats.value(i).mean));
    ckpt.arrays.push_back(named("stats." + stats.name(i) + ".var", stats.value(i).var));
  }
  if (optimizer) {
    ckpt.set("optimizer.step", std::to_string(optimizer->step));
    for (std::size_t i = 0; i < optimizer->m.size(); ++i) {
      ckpt.arrays.push_back(named("opt.m." + params.name(i), optimizer->m[i]));
      ckpt.arrays.push_back(named("opt.v." + params.name(i), optimizer->v[i]));
    }
  }
  return ckpt;
}

unet::UNetConfig config_from_checkpoint(const Checkpoint& ckpt) {
  unet::UNetConfig c;
  c.dims = {to_size(ckpt, "model.nx"), to_size(ckpt, "model.ny"), to_size(ckpt, "model.nz")};
  c.base_width = to_size(ckpt, "model.base_width");
  c.channel_multiplier = to_size(ckpt, "model.channel_multiplier");
  c.max_width = to_size(ckpt, "model.max_width");
  c.depth = to_size(ckpt, "model.depth");
  c.kernel = to_size(ckpt, "model.kernel");
  c.dilation = to_size(ckpt, "model.dilation");
  c.se_reduction = to_size(ckpt, "model.se_reduction");
  c.head_width = to_size(ckpt, "model.head_width");
  c.dropout = to_double(ckpt, "model.dropout");
  c.predict_fields = to_size(ckpt, "model.predict_fields") != 0;
  c.seed = to_size(ckpt, "model.seed");
  c.cd_offset = to_double(ckpt, "model.cd_offset");
  c.cd_scale = to_double(ckpt, "model.cd_scale");
  c.validate();
  return c;
}

void restore_model(unet::UNetModel<float>& model, const Checkpoint& ckpt) {
  auto& params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) load_into(params.value(i), ckpt, params.name(i));
  auto& stats = model.batch_stats();
  for (std::size_t i = 0; i < stats.size(); ++i) {
    load_into(stats.value(i).mean, ckpt, "stats." + stats.name(i) + ".mean");
    load_into(stats.value(i).var, ckpt, "stats." + stats.name(i) + ".var");
  }
}

unet::UNetModel<float> model_from_checkpoint(const Checkpoint& ckpt) {
  unet::UNetModel<float> model(config_from_checkpoint(ckpt));
  restore_model(model, ckpt);
  return model;
}

void restore_optimizer(OptimizerState<float>& state, const unet::UNetModel<float>& model, const Checkpoint& ckpt) {
  const auto& params = model.parameters();
  OptimizerState<float> s;
  s.step = to_size(ckpt, "optimizer.step");
  if (s.step == 0) {
    state = std::move(s);
    return;
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    s.m.emplace_back(params.value(i).shape());
    s.v.emplace_back(params.value(i).shape());
    load_into(s.m.back(), ckpt, "opt.m." + params.name(i));
    load_into(s.v.back(), ckpt, "opt.v." + params.name(i));
  }
  state = std::move(s);
}

}  // namespace aerosdf::training

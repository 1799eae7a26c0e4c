#include "bfpn/io.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace bfpn::io {

uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x00000100000001B3ull;
  }
  return h;
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open file: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, std::string_view content) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write file: " + path);
  f.write(content.data(), std::streamsize(content.size()));
  if (!f) throw IoError("write failed: " + path);
}

namespace {

void put_u16(std::string& out, uint16_t v) {
  out.push_back(char(v & 0xff));
  out.push_back(char((v >> 8) & 0xff));
}
void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}
void put_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}
uint16_t get_u16(std::string_view b, size_t& o) {
  if (o + 2 > b.size()) throw IoError("truncated stream (u16)");
  uint16_t v = uint16_t(uint8_t(b[o])) | uint16_t(uint8_t(b[o + 1])) << 8;
  o += 2;
  return v;
}
uint32_t get_u32(std::string_view b, size_t& o) {
  if (o + 4 > b.size()) throw IoError("truncated stream (u32)");
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= uint32_t(uint8_t(b[o + i])) << (8 * i);
  o += 4;
  return v;
}
uint64_t get_u64(std::string_view b, size_t& o) {
  if (o + 8 > b.size()) throw IoError("truncated stream (u64)");
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= uint64_t(uint8_t(b[o + i])) << (8 * i);
  o += 8;
  return v;
}

void put_f32(std::string& out, float f) {
  uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32(out, bits);
}

constexpr uint8_t kBtsrVersion = 0x01;
constexpr uint8_t kDtypeF32 = 0x00;
constexpr uint8_t kDtypeU8 = 0x01;

void encode_btsr_header(std::string& out, uint8_t dtype,
                        const std::vector<int>& shape) {
  out += "BTSR";
  out.push_back(char(kBtsrVersion));
  out.push_back(char(dtype));
  if (shape.size() > 255) throw IoError("BTSR: too many dimensions");
  out.push_back(char(uint8_t(shape.size())));
  for (int e : shape) {
    if (e <= 0) throw IoError("BTSR: extents must be positive");
    put_u32(out, uint32_t(e));
  }
}

}  // namespace

void encode_btsr_f32(std::string& out, const std::vector<int>& shape,
                     const float* data) {
  encode_btsr_header(out, kDtypeF32, shape);
  size_t n = 1;
  for (int e : shape) n *= size_t(e);
  out.reserve(out.size() + 4 * n);
  for (size_t i = 0; i < n; ++i) put_f32(out, data[i]);
}

void encode_btsr_u8(std::string& out, const std::vector<int>& shape,
                    const uint8_t* data) {
  encode_btsr_header(out, kDtypeU8, shape);
  size_t n = 1;
  for (int e : shape) n *= size_t(e);
  out.append(reinterpret_cast<const char*>(data), n);
}

Btsr decode_btsr(std::string_view buf, size_t& offset) {
  if (offset + 7 > buf.size()) throw IoError("BTSR: truncated header");
  if (buf.substr(offset, 4) != "BTSR")
    throw IoError("BTSR: bad magic bytes");
  offset += 4;
  uint8_t version = uint8_t(buf[offset++]);
  if (version != kBtsrVersion)
    throw IoError("BTSR: unsupported version " + std::to_string(version));
  Btsr t;
  t.dtype = uint8_t(buf[offset++]);
  if (t.dtype != kDtypeF32 && t.dtype != kDtypeU8)
    throw IoError("BTSR: unknown dtype byte");
  uint8_t ndim = uint8_t(buf[offset++]);
  t.shape.resize(ndim);
  for (int i = 0; i < ndim; ++i) {
    uint32_t e = get_u32(buf, offset);
    if (e == 0 || e > (1u << 30)) throw IoError("BTSR: invalid extent");
    t.shape[i] = int(e);
  }
  size_t n = t.numel();
  if (t.dtype == kDtypeF32) {
    if (offset + 4 * n > buf.size()) throw IoError("BTSR: truncated payload");
    t.f32.resize(n);
    for (size_t i = 0; i < n; ++i) {
      uint32_t bits = get_u32(buf, offset);
      std::memcpy(&t.f32[i], &bits, 4);
    }
  } else {
    if (offset + n > buf.size()) throw IoError("BTSR: truncated payload");
    t.u8.assign(buf.begin() + std::string_view::difference_type(offset),
                buf.begin() + std::string_view::difference_type(offset + n));
    offset += n;
  }
  return t;
}

void write_btsr_f32(const std::string& path, const std::vector<int>& shape,
                    const float* data) {
  std::string buf;
  encode_btsr_f32(buf, shape, data);
  write_file(path, buf);
}

void write_btsr_u8(const std::string& path, const std::vector<int>& shape,
                   const uint8_t* data) {
  std::string buf;
  encode_btsr_u8(buf, shape, data);
  write_file(path, buf);
}

Btsr read_btsr(const std::string& path) {
  std::string buf = read_file(path);
  size_t off = 0;
  Btsr t = decode_btsr(buf, off);
  if (off != buf.size()) throw IoError("BTSR: trailing bytes in " + path);
  return t;
}

// --- PGM ---------------------------------------------------------------

void write_pgm(const std::string& path, int w, int h, const uint8_t* data) {
  std::string buf = "P5\n" + std::to_string(w) + " " + std::to_string(h) +
                    "\n255\n";
  buf.append(reinterpret_cast<const char*>(data), size_t(w) * h);
  write_file(path, buf);
}

Pgm read_pgm(const std::string& path) {
  std::string buf = read_file(path);
  size_t o = 0;
  auto token = [&]() -> std::string {
    // skip whitespace and '#' comments
    for (;;) {
      while (o < buf.size() && std::isspace(uint8_t(buf[o]))) ++o;
      if (o < buf.size() && buf[o] == '#') {
        while (o < buf.size() && buf[o] != '\n') ++o;
        continue;
      }
      break;
    }
    size_t start = o;
    while (o < buf.size() && !std::isspace(uint8_t(buf[o]))) ++o;
    return buf.substr(start, o - start);
  };
  if (token() != "P5") throw IoError("PGM: bad magic in " + path);
  Pgm p;
  try {
    p.w = std::stoi(token());
    p.h = std::stoi(token());
    int maxval = std::stoi(token());
    if (maxval != 255) throw IoError("PGM: unsupported maxval");
  } catch (const std::logic_error&) {
    throw IoError("PGM: malformed header in " + path);
  }
  if (p.w <= 0 || p.h <= 0) throw IoError("PGM: invalid dimensions");
  ++o;  // single whitespace after maxval
  if (o + size_t(p.w) * p.h > buf.size())
    throw IoError("PGM: truncated payload in " + path);
  p.data.assign(buf.begin() + std::string::difference_type(o),
                buf.begin() + std::string::difference_type(o + size_t(p.w) * p.h));
  return p;
}

// --- checkpoint ----------------------------------------------------------

constexpr uint8_t kCkptVersion = 1;

void save_checkpoint(const std::string& path, const BayesianFpn<float>& model,
                     const Adam<float>* adam) {
  std::string buf;
  buf += "BFPN";
  buf.push_back(char(kCkptVersion));
  put_u64(buf, fnv1a64(canonical_config_text(model.config())));
  const auto& entries = model.params().entries;
  put_u32(buf, uint32_t(entries.size()));
  for (const auto& e : entries) {
    if (e.name.size() > 0xffff) throw IoError("checkpoint: name too long");
    put_u16(buf, uint16_t(e.name.size()));
    buf += e.name;
    encode_btsr_f32(buf, e.tensor.shape(), e.tensor.data());
  }
  buf.push_back(adam ? char(1) : char(0));
  if (adam) {
    put_u64(buf, uint64_t(adam->t()));
    size_t k = 0;
    for (const auto& e : entries) {
      if (!e.learnable) continue;
      encode_btsr_f32(buf, e.tensor.shape(), adam->m()[k].data());
      encode_btsr_f32(buf, e.tensor.shape(), adam->v()[k].data());
      ++k;
    }
  }
  write_file(path, buf);
}

void load_checkpoint(const std::string& path, BayesianFpn<float>& model,
                     Adam<float>* adam) {
  std::string buf = read_file(path);
  size_t o = 0;
  if (buf.size() < 5 || buf.substr(0, 4) != "BFPN")
    throw IoError("checkpoint: bad magic in " + path);
  o = 4;
  uint8_t version = uint8_t(buf[o++]);
  if (version != kCkptVersion)
    throw IoError("checkpoint: unsupported version " + std::to_string(version));
  uint64_t digest = get_u64(buf, o);
  uint64_t expected = fnv1a64(canonical_config_text(model.config()));
  if (digest != expected)
    throw UsageError("checkpoint: config digest mismatch (checkpoint was "
                     "written with a different model configuration)");
  uint32_t count = get_u32(buf, o);
  auto& entries = model.params().entries;
  if (count != entries.size())
    throw IoError("checkpoint: parameter count mismatch");
  for (auto& e : entries) {
    uint16_t len = get_u16(buf, o);
    if (o + len > buf.size()) throw IoError("checkpoint: truncated name");
    std::string name = buf.substr(o, len);
    o += len;
    if (name != e.name)
      throw IoError("checkpoint: parameter name mismatch: expected " + e.name +
                    ", found " + name);
    Btsr t = decode_btsr(buf, o);
    if (t.dtype != kDtypeF32 || t.shape != e.tensor.shape())
      throw IoError("checkpoint: tensor shape mismatch for " + name);
    std::copy(t.f32.begin(), t.f32.end(), e.tensor.data());
  }
  if (o >= buf.size()) throw IoError("checkpoint: missing optimizer flag");
  uint8_t has_adam = uint8_t(buf[o++]);
  if (has_adam && adam) {
    adam->set_t(int64_t(get_u64(buf, o)));
    size_t k = 0;
    for (const auto& e : entries) {
      if (!e.learnable) continue;
      Btsr m = decode_btsr(buf, o);
      Btsr v = decode_btsr(buf, o);
      if (m.numel() != e.tensor.numel() || v.numel() != e.tensor.numel())
        throw IoError("checkpoint: optimizer state shape mismatch");
      adam->m()[k] = std::move(m.f32);
      adam->v()[k] = std::move(v.f32);
      ++k;
    }
  }
}

// --- dataset directories --------------------------------------------------

namespace {

std::string sample_image_path(const std::string& dir, int id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "img_%05d.pgm", id);
  return (fs::path(dir) / buf).string();
}
std::string sample_mask_path(const std::string& dir, int id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "msk_%05d.btsr", id);
  return (fs::path(dir) / buf).string();
}

json params_to_json(const PhantomParams& p) {
  json j;
  j["lung_c0"] = p.lung_c0;
  j["lung_c1"] = p.lung_c1;
  j["heart_c0"] = p.heart_c0;
  j["heart_c1"] = p.heart_c1;
  j["left"] = {p.left_cx, p.left_cy, p.left_ax, p.left_ay};
  j["right"] = {p.right_cx, p.right_cy, p.right_ax, p.right_ay};
  j["heart"] = {p.heart_cx, p.heart_cy, p.heart_ax, p.heart_ay};
  j["background"] = p.background;
  j["lung_value"] = p.lung_value;
  j["heart_value"] = p.heart_value;
  j["shade_v"] = p.shade_v;
  j["shade_h"] = p.shade_h;
  j["noise_sigma"] = p.noise_sigma;
  j["sample_seed"] = p.sample_seed;
  return j;
}

void params_from_json(const json& j, PhantomParams& p) {
  p.lung_c0 = j.at("lung_c0").get<int>();
  p.lung_c1 = j.at("lung_c1").get<int>();
  p.heart_c0 = j.at("heart_c0").get<int>();
  p.heart_c1 = j.at("heart_c1").get<int>();
  auto arr = [&](const char* k, double* out) {
    const auto& a = j.at(k);
    for (int i = 0; i < 4; ++i) out[i] = a.at(size_t(i)).get<double>();
  };
  double l[4], r[4], h[4];
  arr("left", l);
  arr("right", r);
  arr("heart", h);
  p.left_cx = l[0];
  p.left_cy = l[1];
  p.left_ax = l[2];
  p.left_ay = l[3];
  p.right_cx = r[0];
  p.right_cy = r[1];
  p.right_ax = r[2];
  p.right_ay = r[3];
  p.heart_cx = h[0];
  p.heart_cy = h[1];
  p.heart_ax = h[2];
  p.heart_ay = h[3];
  p.background = j.at("background").get<double>();
  p.lung_value = j.at("lung_value").get<double>();
  p.heart_value = j.at("heart_value").get<double>();
  p.shade_v = j.at("shade_v").get<double>();
  p.shade_h = j.at("shade_h").get<double>();
  p.noise_sigma = j.at("noise_sigma").get<double>();
  p.sample_seed = j.at("sample_seed").get<uint64_t>();
}

}  // namespace

void save_dataset(const std::string& dir,
                  const std::vector<PhantomSample>& samples) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory: " + dir);
  std::string meta;
  for (const auto& s : samples) {
    std::vector<uint8_t> img(s.image.size());
    for (size_t i = 0; i < s.image.size(); ++i)
      img[i] = uint8_t(std::lround(s.image[i] * 255.0f));
    write_pgm(sample_image_path(dir, s.id), s.size, s.size, img.data());

    std::vector<uint8_t> masks(2 * s.heart_mask.size());
    std::copy(s.heart_mask.begin(), s.heart_mask.end(), masks.begin());
    std::copy(s.lungs_mask.begin(), s.lungs_mask.end(),
              masks.begin() + std::ptrdiff_t(s.heart_mask.size()));
    write_btsr_u8(sample_mask_path(dir, s.id), {2, s.size, s.size},
                  masks.data());

    json j;
    j["id"] = s.id;
    j["gt_ctr"] = s.gt_ctr;
    j["size"] = s.size;
    j["params"] = params_to_json(s.params);
    meta += j.dump();
    meta += "\n";
  }
  write_file((fs::path(dir) / "metadata.jsonl").string(), meta);
}

std::vector<PhantomSample> load_dataset(const std::string& dir) {
  std::string meta = read_file((fs::path(dir) / "metadata.jsonl").string());
  std::vector<PhantomSample> samples;
  std::istringstream lines(meta);
  std::string line;
  while (std::getline(lines, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw IoError(std::string("metadata.jsonl: parse error: ") + e.what());
    }
    PhantomSample s;
    s.id = j.at("id").get<int>();
    s.gt_ctr = j.at("gt_ctr").get<double>();
    s.size = j.at("size").get<int>();
    params_from_json(j.at("params"), s.params);

    Pgm img = read_pgm(sample_image_path(dir, s.id));
    if (img.w != s.size || img.h != s.size)
      throw IoError("dataset: image size mismatch for id " +
                    std::to_string(s.id));
    s.image.resize(img.data.size());
    for (size_t i = 0; i < img.data.size(); ++i)
      s.image[i] = float(img.data[i]) / 255.0f;

    Btsr masks = read_btsr(sample_mask_path(dir, s.id));
    if (masks.dtype != kDtypeU8 || masks.shape.size() != 3 ||
        masks.shape[0] != 2 || masks.shape[1] != s.size ||
        masks.shape[2] != s.size)
      throw IoError("dataset: mask tensor mismatch for id " +
                    std::to_string(s.id));
    const size_t npx = size_t(s.size) * s.size;
    s.heart_mask.assign(masks.u8.begin(),
                        masks.u8.begin() + std::ptrdiff_t(npx));
    s.lungs_mask.assign(masks.u8.begin() + std::ptrdiff_t(npx),
                        masks.u8.end());
    samples.push_back(std::move(s));
  }
  if (samples.empty()) throw IoError("dataset: no samples found in " + dir);
  return samples;
}

void write_splits(const std::string& dir, const SplitIds& ids, uint64_t seed) {
  json j;
  j["seed"] = seed;
  j["train"] = ids.train;
  j["val"] = ids.val;
  j["test"] = ids.test;
  write_file((fs::path(dir) / "splits.json").string(), j.dump(2) + "\n");
}

bool read_splits(const std::string& dir, SplitIds& ids) {
  const std::string path = (fs::path(dir) / "splits.json").string();
  if (!fs::exists(path)) return false;
  json j;
  try {
    j = json::parse(read_file(path));
    ids.train = j.at("train").get<std::vector<int>>();
    ids.val = j.at("val").get<std::vector<int>>();
    ids.test = j.at("test").get<std::vector<int>>();
  } catch (const json::exception& e) {
    throw IoError(std::string("splits.json: parse error: ") + e.what());
  }
  return true;
}

}  // namespace bfpn::io

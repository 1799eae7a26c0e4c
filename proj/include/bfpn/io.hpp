#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "bfpn/model.hpp"
#include "bfpn/optim.hpp"
#include "bfpn/phantom.hpp"

namespace bfpn::io {

uint64_t fnv1a64(std::string_view s);

// --- BTSR binary tensor format ---------------------------------------------
// magic "BTSR" | version 0x01 | dtype (0x00 f32, 0x01 u8) | ndim u8 |
// ndim x u32 little-endian extents | row-major payload.

struct Btsr {
  uint8_t dtype = 0;  // 0x00 f32, 0x01 u8
  std::vector<int> shape;
  std::vector<float> f32;
  std::vector<uint8_t> u8;
  size_t numel() const {
    size_t n = 1;
    for (int e : shape) n *= size_t(e);
    return n;
  }
};

void encode_btsr_f32(std::string& out, const std::vector<int>& shape,
                     const float* data);
void encode_btsr_u8(std::string& out, const std::vector<int>& shape,
                    const uint8_t* data);
// Decodes one BTSR blob starting at `offset`; advances offset past it.
Btsr decode_btsr(std::string_view buf, size_t& offset);

void write_btsr_f32(const std::string& path, const std::vector<int>& shape,
                    const float* data);
void write_btsr_u8(const std::string& path, const std::vector<int>& shape,
                   const uint8_t* data);
Btsr read_btsr(const std::string& path);

// --- PGM (P5, 8-bit) --------------------------------------------------------

struct Pgm {
  int w = 0, h = 0;
  std::vector<uint8_t> data;
};

void write_pgm(const std::string& path, int w, int h, const uint8_t* data);
Pgm read_pgm(const std::string& path);

// --- checkpoint -------------------------------------------------------------
// magic "BFPN" | version u8 = 1 | config digest u64 | count u32 |
// per tensor: name length u16, UTF-8 name, BTSR f32 blob |
// optimizer presence u8 | when present: step u64, per learnable tensor in
// store order: BTSR m, BTSR v.

void save_checkpoint(const std::string& path, const BayesianFpn<float>& model,
                     const Adam<float>* adam);
void load_checkpoint(const std::string& path, BayesianFpn<float>& model,
                     Adam<float>* adam);

// --- dataset directories ----------------------------------------------------
// img_%05d.pgm + msk_%05d.btsr (u8 [2,H,W], heart then lungs) +
// metadata.jsonl + splits.json

void save_dataset(const std::string& dir,
                  const std::vector<PhantomSample>& samples);
std::vector<PhantomSample> load_dataset(const std::string& dir);

struct SplitIds {
  std::vector<int> train, val, test;
};
void write_splits(const std::string& dir, const SplitIds& ids, uint64_t seed);
bool read_splits(const std::string& dir, SplitIds& ids);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);

}  // namespace bfpn::io

#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <utility>

#include "jcl/nn/tensor.hpp"

namespace jcl::nn {

using MetaMap = std::map<std::string, std::string>;

// Binary layout (little-endian): magic "JCL1", version byte 1, u32 metadata
// count then (u32 len, bytes) key/value pairs, u32 param count then per param
// (u32 len, name, u32 ndims, u64 dims..., float32 data). Values are float32
// representable by construction, so save/load round-trips bit-exactly.
void save_checkpoint(const ParamStore& params, const MetaMap& meta,
                     std::ostream& out);
std::pair<ParamStore, MetaMap> load_checkpoint(std::istream& in);

void save_checkpoint_file(const ParamStore& params, const MetaMap& meta,
                          const std::string& path);
std::pair<ParamStore, MetaMap> load_checkpoint_file(const std::string& path);

}  // namespace jcl::nn

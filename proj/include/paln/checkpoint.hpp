#ifndef PALN_CHECKPOINT_HPP_
#define PALN_CHECKPOINT_HPP_

#include <filesystem>
#include <span>
#include <vector>

#include "paln/tensor.hpp"

namespace paln {

// Binary little-endian checkpoint: magic "PALN", format version u32, tensor
// count u32, then per tensor: name length u16, name bytes, rank u8, extents
// u32 each, values as 32-bit floats.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path,
                     std::span<const NamedTensor> tensors);

// Rejects wrong magic or version.
std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path);

// Copies checkpoint values into same-named parameters; every parameter must
// be present with a matching shape.
void restore_parameters(std::span<NamedTensor> params,
                        std::span<const NamedTensor> checkpoint);

}  // namespace paln

#endif  // PALN_CHECKPOINT_HPP_

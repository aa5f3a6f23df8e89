#pragma once

#include <memory>
#include <string>

#include "core/model.hpp"

namespace msce {

// Checkpoint file layout (bit-exact, little-endian):
//   "MSCE" | version u8 | header length u32 | header JSON (ModelConfig)
//   then per tensor: name length u32 | name | rank u32 | dims u32 each |
//   payload as float32, and finally CRC-32 of everything before it.
// Entries cover parameters plus batchnorm running stats in declaration order.
inline constexpr char kCheckpointMagic[4] = {'M', 'S', 'C', 'E'};
inline constexpr std::uint8_t kCheckpointVersion = 1;

// Payloads are float32 regardless of the model's scalar type.
template <class T>
std::string serialize_model(Model<T>& model);
template <class T>
void save_checkpoint(Model<T>& model, const std::string& path);

std::unique_ptr<Model<float>> model_from_bytes(const std::string& bytes);
std::unique_ptr<Model<float>> load_checkpoint(const std::string& path);

// The checkpoint's trailing CRC-32; identifies the model on the wire.
std::uint32_t model_crc(Model<float>& model);
// The same identifier read off serialized checkpoint bytes.
std::uint32_t checkpoint_crc(const std::string& bytes);

// Shared record helpers, reused by the optimizer-state sidecar.
void put_record(std::string& out, const std::string& name, const std::vector<int>& dims,
                const float* values, std::size_t count);
struct RecordReader {
    explicit RecordReader(const std::string& bytes, const char magic[4], std::uint8_t version);
    nlohmann::json header;
    // Reads the next record; returns false at the end of the payload.
    bool next(std::string& name, std::vector<int>& dims, std::vector<float>& values);

  private:
    const std::string& bytes_;
    std::size_t pos_ = 0;
    std::size_t end_ = 0;
};

}  // namespace msce

#include "core/checkpoint.hpp"

#include <cstring>
#include <functional>

#include "core/bytes.hpp"
#include "core/crc32.hpp"
#include "core/wav.hpp"

namespace msce {

using nlohmann::json;

void put_record(std::string& out, const std::string& name, const std::vector<int>& dims,
                const float* values, std::size_t count) {
    put_u32le(out, static_cast<std::uint32_t>(name.size()));
    out.append(name);
    put_u32le(out, static_cast<std::uint32_t>(dims.size()));
    std::size_t expect = 1;
    for (int d : dims) {
        put_u32le(out, static_cast<std::uint32_t>(d));
        expect *= static_cast<std::size_t>(d);
    }
    if (expect != count) fail_invalid("record dims do not match value count: " + name);
    for (std::size_t i = 0; i < count; ++i) put_f32le(out, values[i]);
}

namespace {

std::string serialize_records(const json& header, const char magic[4], std::uint8_t version,
                              const std::function<void(std::string&)>& body) {
    std::string out;
    out.append(magic, 4);
    put_u8(out, version);
    const std::string header_text = header.dump();
    put_u32le(out, static_cast<std::uint32_t>(header_text.size()));
    out.append(header_text);
    body(out);
    put_u32le(out, crc32(out.data(), out.size()));
    return out;
}

}  // namespace

RecordReader::RecordReader(const std::string& bytes, const char magic[4], std::uint8_t version)
    : bytes_(bytes) {
    if (bytes.size() < 13) fail_data("checkpoint: file too short");
    if (std::memcmp(bytes.data(), magic, 4) != 0) fail_data("checkpoint: bad magic");
    if (static_cast<std::uint8_t>(bytes[4]) != version)
        fail_data("checkpoint: unsupported version " + std::to_string(static_cast<unsigned char>(bytes[4])));
    const std::uint32_t stored_crc = crc32(bytes.data(), bytes.size() - 4);
    ByteReader tail(bytes.data() + bytes.size() - 4, 4);
    if (tail.u32le() != stored_crc) fail_data("checkpoint: CRC mismatch");

    ByteReader r(bytes.data(), bytes.size() - 4);
    r.skip(5);
    const std::uint32_t header_len = r.u32le();
    r.need(header_len);
    try {
        header = json::parse(std::string(reinterpret_cast<const char*>(r.bytes(header_len)), header_len));
    } catch (const json::exception& e) {
        fail_data("checkpoint: header parse error: " + std::string(e.what()));
    }
    pos_ = r.pos;
    end_ = bytes.size() - 4;
}

bool RecordReader::next(std::string& name, std::vector<int>& dims, std::vector<float>& values) {
    if (pos_ == end_) return false;
    ByteReader r(bytes_.data() + pos_, end_ - pos_);
    const std::uint32_t name_len = r.u32le();
    name.assign(reinterpret_cast<const char*>(r.bytes(name_len)), name_len);
    const std::uint32_t rank = r.u32le();
    if (rank > 8) fail_data("checkpoint: implausible tensor rank");
    dims.assign(rank, 0);
    std::size_t count = 1;
    for (auto& d : dims) {
        d = static_cast<int>(r.u32le());
        if (d < 1) fail_data("checkpoint: non-positive dim in record " + name);
        count *= static_cast<std::size_t>(d);
    }
    values.resize(count);
    for (auto& v : values) v = r.f32le();
    pos_ += r.pos;
    return true;
}

template <class T>
std::string serialize_model(Model<T>& model) {
    return serialize_records(model.config().to_json(), kCheckpointMagic, kCheckpointVersion,
                             [&](std::string& out) {
                                 for (const auto& entry : model.named_tensors()) {
                                     const std::vector<float> buf(entry.data->begin(),
                                                                  entry.data->end());
                                     put_record(out, entry.name, entry.dims, buf.data(), buf.size());
                                 }
                             });
}

template <class T>
void save_checkpoint(Model<T>& model, const std::string& path) {
    write_file(path, serialize_model(model));
}

std::unique_ptr<Model<float>> model_from_bytes(const std::string& bytes) {
    RecordReader reader(bytes, kCheckpointMagic, kCheckpointVersion);
    const ModelConfig cfg = ModelConfig::from_json(reader.header);
    auto model = std::make_unique<Model<float>>(cfg, 0);

    auto entries = model->named_tensors();
    std::string name;
    std::vector<int> dims;
    std::vector<float> values;
    std::size_t i = 0;
    while (reader.next(name, dims, values)) {
        if (i >= entries.size()) fail_data("checkpoint: unexpected extra record " + name);
        auto& entry = entries[i];
        if (name != entry.name)
            fail_data("checkpoint: record order mismatch: got " + name + ", expected " + entry.name);
        if (dims != entry.dims || values.size() != entry.data->size())
            fail_data("checkpoint: shape mismatch for " + name);
        *entry.data = values;
        ++i;
    }
    if (i != entries.size()) fail_data("checkpoint: missing records (got " + std::to_string(i) +
                                       " of " + std::to_string(entries.size()) + ")");
    return model;
}

std::unique_ptr<Model<float>> load_checkpoint(const std::string& path) {
    return model_from_bytes(read_file(path));
}

std::uint32_t model_crc(Model<float>& model) {
    // The checkpoint's own trailing CRC. Hashing the whole file would give
    // the same constant for every valid checkpoint (CRC residue), so the
    // identifier is the CRC over everything before the trailer.
    const std::string bytes = serialize_model(model);
    return crc32(bytes.data(), bytes.size() - 4);
}

std::uint32_t checkpoint_crc(const std::string& bytes) {
    if (bytes.size() < 4) fail_data("checkpoint too short");
    ByteReader r(bytes.data() + bytes.size() - 4, 4);
    return r.u32le();
}

template std::string serialize_model<float>(Model<float>&);
template std::string serialize_model<double>(Model<double>&);
template void save_checkpoint<float>(Model<float>&, const std::string&);
template void save_checkpoint<double>(Model<double>&, const std::string&);

}  // namespace msce

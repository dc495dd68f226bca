#pragma once

// Parameter checkpoint format, version 1. All integers little-endian.
//
//   offset  size        field
//   0       4           magic "TXLC"
//   4       4   u32     format version (1)
//   8       4   u32     scalar width in bytes (4 = float32, 8 = float64)
//   12      8   u64     model-config fingerprint (FNV-1a 64 of the canonical model config JSON)
//   20      8   u64     metadata length M
//   28      M           metadata, UTF-8 JSON (model config, vocabulary, label sets)
//   28+M    4   u32     parameter count P
//   then P records:
//           4   u32     name length L, followed by L bytes of name
//           1   u8      trainable flag
//           4   u32     rank R, followed by R x u64 dimensions
//           N*w         values, IEEE-754 of the declared scalar width, row-major
//
// A float64 file loads into a float32 model and vice versa (values are cast).

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <type_traits>
#include <vector>

#include "txlr/numerics/parameter.hpp"

namespace txlr {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

class BinaryWriter {
public:
    template <typename U>
    void put(U v) requires std::is_arithmetic_v<U> {
        const auto* p = reinterpret_cast<const char*>(&v);
        buf_.append(p, sizeof(U));
    }
    void put_bytes(const std::string& s) { buf_.append(s); }
    void put_string(const std::string& s) {
        put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
        buf_.append(s);
    }
    template <typename T>
    void put_tensor(const Tensor<T>& t) {
        put<std::uint32_t>(static_cast<std::uint32_t>(t.shape().size()));
        for (auto d : t.shape()) put<std::uint64_t>(d);
        buf_.append(reinterpret_cast<const char*>(t.data().data()), t.size() * sizeof(T));
    }

    const std::string& bytes() const noexcept { return buf_; }

    void write_file(const std::string& path) const {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot open '" + path + "' for writing");
        out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
        if (!out) throw DataError("failed writing '" + path + "'");
    }

private:
    std::string buf_;
};

class BinaryReader {
public:
    explicit BinaryReader(std::string bytes, std::string source = "<memory>")
        : buf_(std::move(bytes)), source_(std::move(source)) {}

    static BinaryReader from_file(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw DataError("cannot open '" + path + "'");
        std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        return BinaryReader(std::move(bytes), path);
    }

    template <typename U>
    U get() requires std::is_arithmetic_v<U> {
        need(sizeof(U));
        U v;
        std::memcpy(&v, buf_.data() + pos_, sizeof(U));
        pos_ += sizeof(U);
        return v;
    }
    std::string get_bytes(std::size_t n) {
        need(n);
        std::string s = buf_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::string get_string() { return get_bytes(get<std::uint32_t>()); }

    /// Reads a tensor stored with scalar type `Stored` into a Tensor<T>.
    template <typename T, typename Stored = T>
    Tensor<T> get_tensor() {
        const auto rank = get<std::uint32_t>();
        if (rank == 0) return Tensor<T>();  // default-constructed (empty) tensor
        Shape shape(rank);
        for (auto& d : shape) d = static_cast<std::size_t>(get<std::uint64_t>());
        const std::size_t n = shape_size(shape);
        need(n * sizeof(Stored));
        std::vector<T> values(n);
        for (std::size_t i = 0; i < n; ++i) {
            Stored v;
            std::memcpy(&v, buf_.data() + pos_ + i * sizeof(Stored), sizeof(Stored));
            values[i] = static_cast<T>(v);
        }
        pos_ += n * sizeof(Stored);
        return Tensor<T>(std::move(shape), std::move(values));
    }

    bool at_end() const noexcept { return pos_ == buf_.size(); }
    const std::string& source() const noexcept { return source_; }

private:
    void need(std::size_t n) const {
        if (pos_ + n > buf_.size()) throw DataError("'" + source_ + "': truncated binary data");
    }

    std::string buf_;
    std::string source_;
    std::size_t pos_ = 0;
};

inline constexpr char kCheckpointMagic[4] = {'T', 'X', 'L', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointHeader {
    std::uint32_t scalar_width = 0;
    std::uint64_t fingerprint = 0;
    std::string metadata;
};

template <typename T>
void write_checkpoint(BinaryWriter& w, const ParameterSet<T>& params, std::uint64_t fingerprint,
                      const std::string& metadata) {
    w.put_bytes(std::string(kCheckpointMagic, 4));
    w.put<std::uint32_t>(kCheckpointVersion);
    w.put<std::uint32_t>(sizeof(T));
    w.put<std::uint64_t>(fingerprint);
    w.put<std::uint64_t>(metadata.size());
    w.put_bytes(metadata);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params.all()) {
        w.put_string(p.name);
        w.put<std::uint8_t>(p.trainable ? 1 : 0);
        w.put_tensor(p.var.value());
    }
}

inline CheckpointHeader read_checkpoint_header(BinaryReader& r) {
    if (r.get_bytes(4) != std::string(kCheckpointMagic, 4)) throw DataError("'" + r.source() + "': not a checkpoint");
    const auto version = r.get<std::uint32_t>();
    if (version != kCheckpointVersion) {
        throw DataError("'" + r.source() + "': unsupported checkpoint version " + std::to_string(version));
    }
    CheckpointHeader h;
    h.scalar_width = r.get<std::uint32_t>();
    if (h.scalar_width != 4 && h.scalar_width != 8) {
        throw DataError("'" + r.source() + "': bad scalar width " + std::to_string(h.scalar_width));
    }
    h.fingerprint = r.get<std::uint64_t>();
    h.metadata = r.get_bytes(r.get<std::uint64_t>());
    return h;
}

/// Loads values into an existing parameter set. Every stored name must exist
/// with the same shape, and every parameter must be present in the file.
template <typename T>
void read_checkpoint_params(BinaryReader& r, const CheckpointHeader& h, ParameterSet<T>& params) {
    const auto count = r.get<std::uint32_t>();
    if (count != params.size()) {
        throw DataError("'" + r.source() + "': checkpoint has " + std::to_string(count) + " parameters, model has " +
                        std::to_string(params.size()));
    }
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::string name = r.get_string();
        const bool trainable = r.get<std::uint8_t>() != 0;
        Tensor<T> value = h.scalar_width == 4 ? r.get_tensor<T, float>() : r.get_tensor<T, double>();
        if (!params.contains(name)) throw DataError("'" + r.source() + "': unknown parameter '" + name + "'");
        auto& p = params.get(name);
        if (p.var.shape() != value.shape()) {
            throw DataError("'" + r.source() + "': parameter '" + name + "' has shape " + shape_str(value.shape()) +
                            ", model expects " + shape_str(p.var.shape()));
        }
        p.var.mutable_value() = std::move(value);
        p.trainable = trainable;
    }
}

}  // namespace txlr

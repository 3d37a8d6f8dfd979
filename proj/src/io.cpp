#include "gtaseg/io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "gtaseg/error.hpp"

namespace gtaseg {

namespace {

constexpr std::uint16_t kCheckpointVersion = 1;
constexpr std::uint16_t kDatasetVersion = 1;

class Writer {
public:
    explicit Writer(const std::string& path) : out_(path, std::ios::binary) {
        if (!out_) throw IoError("cannot open for writing: " + path);
        path_ = path;
    }

    void u8(std::uint8_t v) { raw(&v, 1); }

    void u16(std::uint16_t v) {
        std::uint8_t b[2] = {static_cast<std::uint8_t>(v), static_cast<std::uint8_t>(v >> 8)};
        raw(b, 2);
    }

    void u32(std::uint32_t v) {
        std::uint8_t b[4] = {static_cast<std::uint8_t>(v), static_cast<std::uint8_t>(v >> 8),
                             static_cast<std::uint8_t>(v >> 16), static_cast<std::uint8_t>(v >> 24)};
        raw(b, 4);
    }

    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

    void bytes(const void* data, std::size_t n) { raw(data, n); }

    void f32_array(const float* data, std::size_t n) {
        if constexpr (std::endian::native == std::endian::little) {
            raw(data, n * sizeof(float));
        } else {
            for (std::size_t i = 0; i < n; ++i) f32(data[i]);
        }
    }

    void close() {
        out_.close();
        if (!out_) throw IoError("write failed: " + path_);
    }

private:
    void raw(const void* data, std::size_t n) {
        out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
        if (!out_) throw IoError("write failed: " + path_);
    }

    std::ofstream out_;
    std::string path_;
};

class Reader {
public:
    explicit Reader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
        if (!in_) throw IoError("cannot open for reading: " + path);
    }

    std::uint8_t u8() {
        std::uint8_t v;
        raw(&v, 1);
        return v;
    }

    std::uint16_t u16() {
        std::uint8_t b[2];
        raw(b, 2);
        return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
    }

    std::uint32_t u32() {
        std::uint8_t b[4];
        raw(b, 4);
        return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
               (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    }

    float f32() { return std::bit_cast<float>(u32()); }

    void bytes(void* data, std::size_t n) { raw(data, n); }

    void f32_array(float* data, std::size_t n) {
        if constexpr (std::endian::native == std::endian::little) {
            raw(data, n * sizeof(float));
        } else {
            for (std::size_t i = 0; i < n; ++i) data[i] = f32();
        }
    }

    std::size_t offset() const { return offset_; }
    const std::string& path() const { return path_; }

    [[noreturn]] void fail(const std::string& what) const {
        throw FormatError(path_ + ": " + what + " at byte " + std::to_string(offset_));
    }

private:
    void raw(void* data, std::size_t n) {
        in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n) {
            throw FormatError(path_ + ": truncated file at byte " + std::to_string(offset_));
        }
        offset_ += n;
    }

    std::ifstream in_;
    std::string path_;
    std::size_t offset_ = 0;
};

void check_magic(Reader& r, const char expect[4], const char* kind) {
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, expect, 4) != 0) {
        throw FormatError(r.path() + ": bad " + kind + " magic at byte 0");
    }
}

void check_version(Reader& r, std::uint16_t expect, const char* kind) {
    const std::size_t at = r.offset();
    const std::uint16_t v = r.u16();
    if (v != expect) {
        throw FormatError(r.path() + ": unsupported " + std::string(kind) + " version " +
                          std::to_string(v) + " (expected " + std::to_string(expect) + ") at byte " +
                          std::to_string(at));
    }
}

void write_sample(Writer& w, const SegSample& s, bool hidden, int size) {
    w.u32(static_cast<std::uint32_t>(s.id));
    w.u8(hidden ? 1 : 0);
    w.f32_array(s.image.data(), static_cast<std::size_t>(s.image.size()));
    std::vector<std::uint8_t> mask(s.mask.size());
    for (std::size_t i = 0; i < s.mask.size(); ++i) mask[i] = static_cast<std::uint8_t>(s.mask[i]);
    w.bytes(mask.data(), mask.size());
    (void)size;
}

SegSample read_sample(Reader& r, int size) {
    SegSample s;
    s.id = static_cast<std::int32_t>(r.u32());
    r.u8();  // hidden flag; split membership carries the same information
    s.image = Tensor({3, size, size});
    r.f32_array(s.image.data(), static_cast<std::size_t>(s.image.size()));
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(size) * size);
    r.bytes(mask.data(), mask.size());
    s.mask.resize(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) s.mask[i] = mask[i];
    return s;
}

}  // namespace

void save_checkpoint(const ParamStore& params, const std::string& path) {
    Writer w(path);
    w.bytes("GTAS", 4);
    w.u16(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(params.size()));
    for (const auto& e : params.entries()) {
        w.u16(static_cast<std::uint16_t>(e.name.size()));
        w.bytes(e.name.data(), e.name.size());
        w.u8(static_cast<std::uint8_t>(e.role));
        w.u16(static_cast<std::uint16_t>(e.layer_index));
        w.u8(static_cast<std::uint8_t>(e.tensor.ndim()));
        for (int d = 0; d < e.tensor.ndim(); ++d) w.u32(static_cast<std::uint32_t>(e.tensor.dim(d)));
        w.f32_array(e.tensor.data(), static_cast<std::size_t>(e.tensor.size()));
    }
    w.close();
}

ParamStore load_checkpoint(const std::string& path) {
    Reader r(path);
    check_magic(r, "GTAS", "checkpoint");
    check_version(r, kCheckpointVersion, "checkpoint");
    const std::uint32_t count = r.u32();
    ParamStore store;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint16_t name_len = r.u16();
        std::string name(name_len, '\0');
        r.bytes(name.data(), name_len);
        const std::uint8_t role = r.u8();
        if (role > 1) r.fail("invalid role byte " + std::to_string(role));
        const std::uint16_t layer = r.u16();
        const std::uint8_t ndim = r.u8();
        if (ndim == 0 || ndim > 4) r.fail("invalid tensor rank " + std::to_string(ndim));
        Shape shape(ndim);
        for (std::uint8_t d = 0; d < ndim; ++d) {
            shape[d] = static_cast<int>(r.u32());
            if (shape[d] <= 0) r.fail("invalid dimension");
        }
        Tensor t(shape);
        r.f32_array(t.data(), static_cast<std::size_t>(t.size()));
        store.add(std::move(name), static_cast<Role>(role), layer, std::move(t));
    }
    return store;
}

void save_dataset(const DatasetSplit& data, const std::string& path) {
    Writer w(path);
    w.bytes("GTAD", 4);
    w.u16(kDatasetVersion);
    w.u16(static_cast<std::uint16_t>(data.classes));
    w.u16(static_cast<std::uint16_t>(data.image_size));
    w.u32(static_cast<std::uint32_t>(data.labeled.size()));
    w.u32(static_cast<std::uint32_t>(data.unlabeled.size()));
    w.u32(static_cast<std::uint32_t>(data.heldout.size()));
    for (const auto& s : data.labeled) write_sample(w, s, false, data.image_size);
    for (const auto& s : data.unlabeled) write_sample(w, s, true, data.image_size);
    for (const auto& s : data.heldout) write_sample(w, s, false, data.image_size);
    w.close();
}

DatasetSplit load_dataset(const std::string& path) {
    Reader r(path);
    check_magic(r, "GTAD", "dataset");
    check_version(r, kDatasetVersion, "dataset");
    DatasetSplit data;
    data.classes = r.u16();
    data.image_size = r.u16();
    if (data.classes < 2) r.fail("invalid class count");
    if (data.image_size < 1) r.fail("invalid image size");
    const std::uint32_t nl = r.u32();
    const std::uint32_t nu = r.u32();
    const std::uint32_t nh = r.u32();
    for (std::uint32_t i = 0; i < nl; ++i) data.labeled.push_back(read_sample(r, data.image_size));
    for (std::uint32_t i = 0; i < nu; ++i) data.unlabeled.push_back(read_sample(r, data.image_size));
    for (std::uint32_t i = 0; i < nh; ++i) data.heldout.push_back(read_sample(r, data.image_size));
    return data;
}

}  // namespace gtaseg

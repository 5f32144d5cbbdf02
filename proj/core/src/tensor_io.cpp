#include "prose/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include <zlib.h>

#include "prose/error.hpp"

namespace prose {

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

class Writer {
public:
    void bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        out_.insert(out_.end(), b, b + n);
    }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f64(double v) {
        const auto bits = std::bit_cast<std::uint64_t>(v);
        for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
    }
    void string(std::string_view s) {
        if (s.size() > std::numeric_limits<std::uint32_t>::max()) {
            throw FormatError("string too long for container");
        }
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    std::vector<std::uint8_t>& buffer() { return out_; }

private:
    std::vector<std::uint8_t> out_;
};

class Reader {
public:
    Reader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

    void need(std::size_t n, const char* what) const {
        if (size_ - pos_ < n) {
            throw TruncationError(std::string("truncated file while reading ") + what);
        }
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    double f64(const char* what) {
        need(8, what);
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
        pos_ += 8;
        return std::bit_cast<double>(bits);
    }
    std::string string(const char* what) {
        const std::uint32_t n = u32(what);
        need(n, what);
        std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
        pos_ += n;
        return s;
    }
    std::size_t remaining() const { return size_ - pos_; }

private:
    const std::uint8_t* data_;
    std::size_t size_;
    std::size_t pos_ = 0;
};

constexpr std::size_t kMagicSize = 8;

}  // namespace

const NamedTensor& TensorFile::find(std::string_view name) const {
    for (const auto& t : tensors)
        if (t.name == name) return t;
    throw ShapeTableError("missing tensor '" + std::string(name) + "'");
}

std::uint32_t crc32_of(const std::uint8_t* data, std::size_t size) {
    uLong crc = ::crc32(0L, Z_NULL, 0);
    while (size > 0) {
        const auto chunk = static_cast<uInt>(std::min<std::size_t>(size, 1u << 30));
        crc = ::crc32(crc, data, chunk);
        data += chunk;
        size -= chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

std::vector<std::uint8_t> encode_tensor_file(std::string_view magic, std::uint32_t version,
                                             const TensorFile& file) {
    if (magic.size() != kMagicSize) throw FormatError("magic must be 8 bytes");
    Writer w;
    w.bytes(magic.data(), magic.size());
    w.u32(version);
    w.string(file.text);
    w.u32(static_cast<std::uint32_t>(file.tensors.size()));
    for (const auto& t : file.tensors) {
        std::size_t count = 1;
        for (auto d : t.dims) count *= d;
        if (count != t.values.size()) {
            throw ShapeTableError("tensor '" + t.name + "' payload does not match its dims");
        }
        w.string(t.name);
        w.u32(static_cast<std::uint32_t>(t.dims.size()));
        for (auto d : t.dims) w.u32(d);
        for (double v : t.values) w.f64(v);
    }
    auto& buf = w.buffer();
    const std::uint32_t crc = crc32_of(buf.data(), buf.size());
    w.u32(crc);
    return std::move(buf);
}

TensorFile decode_tensor_file(std::string_view magic, std::uint32_t version,
                              const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < kMagicSize + 4 + 4) throw TruncationError("file shorter than its header");
    if (std::memcmp(bytes.data(), magic.data(), kMagicSize) != 0) {
        throw MagicError("bad magic: expected '" + std::string(magic) + "'");
    }
    Reader header(bytes.data() + kMagicSize, bytes.size() - kMagicSize);
    const std::uint32_t found_version = header.u32("version");
    if (found_version != version) {
        throw VersionError("unsupported format version " + std::to_string(found_version) +
                           " (expected " + std::to_string(version) + ")");
    }

    const std::size_t body = bytes.size() - 4;
    Reader reader(bytes.data() + kMagicSize + 4, body - kMagicSize - 4);
    TensorFile file;
    file.text = reader.string("text blob");
    const std::uint32_t count = reader.u32("tensor count");
    for (std::uint32_t i = 0; i < count; ++i) {
        NamedTensor t;
        t.name = reader.string("tensor name");
        const std::uint32_t rank = reader.u32("tensor rank");
        if (rank > 8) throw ShapeTableError("tensor '" + t.name + "' has implausible rank");
        std::size_t n = 1;
        for (std::uint32_t r = 0; r < rank; ++r) {
            t.dims.push_back(reader.u32("tensor dims"));
            n *= t.dims.back();
        }
        if (n > reader.remaining() / 8) {
            throw TruncationError("truncated file in payload of tensor '" + t.name + "'");
        }
        t.values.resize(n);
        for (auto& v : t.values) v = reader.f64("tensor payload");
        file.tensors.push_back(std::move(t));
    }
    if (reader.remaining() != 0) throw ShapeTableError("trailing bytes after tensor table");

    Reader tail(bytes.data() + body, 4);
    const std::uint32_t stored = tail.u32("crc");
    if (stored != crc32_of(bytes.data(), body)) throw ChecksumError("CRC32 mismatch");
    return file;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to '" + path.string() + "'");
}

}  // namespace prose

#include "emoflow/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "emoflow/errors.hpp"

namespace emoflow {

namespace {

void put_u32_le(std::vector<unsigned char>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

void put_u64_le(std::vector<unsigned char>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32_le(const unsigned char* p) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
}

std::uint64_t get_u64_le(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

} // namespace

std::vector<unsigned char> encode_tnsr(const Tensor& t) {
    std::vector<unsigned char> out;
    out.reserve(4 + 4 + 8 * t.rank() + 8 * t.numel());
    out.push_back('T');
    out.push_back('N');
    out.push_back('S');
    out.push_back('R');
    put_u32_le(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape) put_u64_le(out, static_cast<std::uint64_t>(d));
    for (double v : t.data) {
        std::uint64_t bits;
        static_assert(sizeof(bits) == sizeof(v));
        std::memcpy(&bits, &v, sizeof(bits));
        put_u64_le(out, bits);
    }
    return out;
}

Tensor decode_tnsr(const std::vector<unsigned char>& bytes) {
    if (bytes.size() < 8 || bytes[0] != 'T' || bytes[1] != 'N' || bytes[2] != 'S' || bytes[3] != 'R')
        throw IoError("TNSR: bad magic");
    const std::uint32_t rank = get_u32_le(bytes.data() + 4);
    std::size_t off = 8;
    if (bytes.size() < off + 8ull * rank) throw IoError("TNSR: truncated header");
    std::vector<std::size_t> shape(rank);
    std::size_t numel = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
        shape[i] = static_cast<std::size_t>(get_u64_le(bytes.data() + off));
        numel *= shape[i];
        off += 8;
    }
    if (bytes.size() != off + 8 * numel) throw IoError("TNSR: payload size mismatch");
    std::vector<double> data(numel);
    for (std::size_t i = 0; i < numel; ++i) {
        const std::uint64_t bits = get_u64_le(bytes.data() + off);
        std::memcpy(&data[i], &bits, sizeof(double));
        off += 8;
    }
    return Tensor(std::move(shape), std::move(data));
}

void write_tnsr(const std::filesystem::path& path, const Tensor& t) {
    const auto bytes = encode_tnsr(t);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("TNSR: cannot open for write: " + path.string());
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("TNSR: write failed: " + path.string());
}

Tensor read_tnsr(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("TNSR: cannot open: " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return decode_tnsr(bytes);
}

} // namespace emoflow

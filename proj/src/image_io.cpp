#include "mmc/image_io.hpp"

#include <array>
#include <cctype>
#include <cstring>
#include <fstream>

namespace mmc {
namespace {

[[noreturn]] void fail(const std::filesystem::path& path, const std::string& why) {
    throw Error(ErrorCode::undecodable_image, path.string() + ": " + why);
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(path, "cannot open file");
    return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::io_error, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::io_error, "short write to " + path.string());
}

Image from_rgb8(const std::vector<std::uint8_t>& rgb, int height, int width) {
    Image img(3, height, width);
    std::size_t i = 0;
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            for (int c = 0; c < 3; ++c) img.at(c, y, x) = static_cast<float>(rgb[i++]) / 255.0f;
    return img;
}

std::vector<std::uint8_t> to_rgb8(const Image& img) {
    std::vector<std::uint8_t> rgb;
    rgb.reserve(static_cast<std::size_t>(img.shape.height) * img.shape.width * 3);
    for (int y = 0; y < img.shape.height; ++y)
        for (int x = 0; x < img.shape.width; ++x)
            for (int c = 0; c < 3; ++c) rgb.push_back(quantize_u8(img.at(std::min(c, img.shape.channels - 1), y, x)));
    return rgb;
}

// ---- PPM (P6, maxval 255) ---------------------------------------------------

Image read_ppm(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::size_t pos = 2; // past "P6"
    auto next_int = [&]() -> int {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(bytes[pos])) {
                ++pos;
            } else {
                break;
            }
        }
        int v = 0;
        bool any = false;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) {
            v = v * 10 + (bytes[pos++] - '0');
            any = true;
        }
        if (!any) fail(path, "malformed PPM header");
        return v;
    };
    const int width = next_int();
    const int height = next_int();
    const int maxval = next_int();
    if (width <= 0 || height <= 0 || maxval != 255) fail(path, "unsupported PPM geometry");
    ++pos; // single whitespace after maxval
    const std::size_t need = static_cast<std::size_t>(width) * height * 3;
    if (bytes.size() < pos + need) fail(path, "truncated PPM pixel data");
    std::vector<std::uint8_t> rgb(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                                  bytes.begin() + static_cast<std::ptrdiff_t>(pos + need));
    return from_rgb8(rgb, height, width);
}

// ---- PNG (8-bit RGB, stored deflate) -----------------------------------------

constexpr std::array<std::uint8_t, 8> kPngMagic = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};

std::uint32_t crc32_of(const std::uint8_t* data, std::size_t n, std::uint32_t crc = 0xffffffffu) {
    static const auto table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    for (std::size_t i = 0; i < n; ++i) crc = table[(crc ^ data[i]) & 0xffu] ^ (crc >> 8);
    return crc;
}

std::uint32_t adler32_of(const std::uint8_t* data, std::size_t n) {
    std::uint32_t a = 1, b = 0;
    for (std::size_t i = 0; i < n; ++i) {
        a = (a + data[i]) % 65521u;
        b = (b + a) % 65521u;
    }
    return (b << 16) | a;
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) | (std::uint32_t(p[2]) << 8) |
           std::uint32_t(p[3]);
}

void put_chunk(std::vector<std::uint8_t>& out, const char type[4], const std::vector<std::uint8_t>& body) {
    put_u32(out, static_cast<std::uint32_t>(body.size()));
    std::vector<std::uint8_t> typed(type, type + 4);
    typed.insert(typed.end(), body.begin(), body.end());
    out.insert(out.end(), typed.begin(), typed.end());
    put_u32(out, crc32_of(typed.data(), typed.size()) ^ 0xffffffffu);
}

std::vector<std::uint8_t> zlib_stored(const std::vector<std::uint8_t>& raw) {
    std::vector<std::uint8_t> z;
    z.push_back(0x78);
    z.push_back(0x01);
    std::size_t off = 0;
    do {
        const std::size_t len = std::min<std::size_t>(raw.size() - off, 65535);
        const bool final_block = off + len == raw.size();
        z.push_back(final_block ? 0x01 : 0x00);
        z.push_back(static_cast<std::uint8_t>(len & 0xff));
        z.push_back(static_cast<std::uint8_t>(len >> 8));
        z.push_back(static_cast<std::uint8_t>(~len & 0xff));
        z.push_back(static_cast<std::uint8_t>((~len >> 8) & 0xff));
        z.insert(z.end(), raw.begin() + static_cast<std::ptrdiff_t>(off),
                 raw.begin() + static_cast<std::ptrdiff_t>(off + len));
        off += len;
    } while (off < raw.size());
    put_u32(z, adler32_of(raw.data(), raw.size()));
    return z;
}

std::vector<std::uint8_t> zlib_stored_inflate(const std::filesystem::path& path,
                                              const std::vector<std::uint8_t>& z) {
    if (z.size() < 6) fail(path, "truncated zlib stream");
    if ((z[0] & 0x0f) != 8) fail(path, "not a deflate stream");
    std::size_t pos = 2;
    std::vector<std::uint8_t> raw;
    for (;;) {
        if (pos >= z.size()) fail(path, "truncated deflate block");
        const std::uint8_t header = z[pos++];
        if ((header >> 1) != 0) fail(path, "compressed PNG data; only stored blocks are supported");
        if (pos + 4 > z.size()) fail(path, "truncated stored block header");
        const std::size_t len = z[pos] | (std::size_t(z[pos + 1]) << 8);
        pos += 4;
        if (pos + len > z.size()) fail(path, "truncated stored block body");
        raw.insert(raw.end(), z.begin() + static_cast<std::ptrdiff_t>(pos),
                   z.begin() + static_cast<std::ptrdiff_t>(pos + len));
        pos += len;
        if (header & 0x01) break;
    }
    return raw;
}

Image read_png(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kPngMagic.data(), 8) != 0)
        fail(path, "bad PNG signature");
    std::size_t pos = 8;
    int width = 0, height = 0;
    std::vector<std::uint8_t> idat;
    while (pos + 8 <= bytes.size()) {
        const std::uint32_t len = get_u32(&bytes[pos]);
        if (pos + 12 + len > bytes.size()) fail(path, "truncated chunk");
        const char* type = reinterpret_cast<const char*>(&bytes[pos + 4]);
        const std::uint8_t* body = &bytes[pos + 8];
        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (len != 13) fail(path, "bad IHDR");
            width = static_cast<int>(get_u32(body));
            height = static_cast<int>(get_u32(body + 4));
            const int bit_depth = body[8], color_type = body[9], interlace = body[12];
            if (bit_depth != 8 || color_type != 2 || interlace != 0)
                fail(path, "unsupported PNG variant (need 8-bit RGB, no interlace)");
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), body, body + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            break;
        }
        pos += 12 + len;
    }
    if (width <= 0 || height <= 0 || idat.empty()) fail(path, "missing IHDR or IDAT");
    const auto raw = zlib_stored_inflate(path, idat);
    const std::size_t stride = static_cast<std::size_t>(width) * 3 + 1;
    if (raw.size() < stride * static_cast<std::size_t>(height)) fail(path, "short scanline data");
    std::vector<std::uint8_t> rgb;
    rgb.reserve(static_cast<std::size_t>(width) * height * 3);
    for (int y = 0; y < height; ++y) {
        const std::uint8_t* row = raw.data() + static_cast<std::size_t>(y) * stride;
        if (row[0] != 0) fail(path, "unsupported PNG filter");
        rgb.insert(rgb.end(), row + 1, row + stride);
    }
    return from_rgb8(rgb, height, width);
}

} // namespace

bool is_supported_image_file(const std::filesystem::path& path) {
    std::error_code ec;
    if (!std::filesystem::is_regular_file(path, ec)) return false;
    std::ifstream in(path, std::ios::binary);
    char head[8] = {};
    in.read(head, 8);
    if (in.gcount() >= 2 && head[0] == 'P' && head[1] == '6') return true;
    return in.gcount() == 8 && std::memcmp(head, kPngMagic.data(), 8) == 0;
}

Image read_image(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') return read_ppm(path, bytes);
    if (bytes.size() >= 8 && std::memcmp(bytes.data(), kPngMagic.data(), 8) == 0)
        return read_png(path, bytes);
    fail(path, "unrecognized image format (expected PPM or PNG)");
}

void write_ppm(const std::filesystem::path& path, const Image& img) {
    std::vector<std::uint8_t> out;
    const std::string header =
        "P6\n" + std::to_string(img.shape.width) + " " + std::to_string(img.shape.height) + "\n255\n";
    out.insert(out.end(), header.begin(), header.end());
    const auto rgb = to_rgb8(img);
    out.insert(out.end(), rgb.begin(), rgb.end());
    write_file_bytes(path, out);
}

void write_png(const std::filesystem::path& path, const Image& img) {
    const auto rgb = to_rgb8(img);
    std::vector<std::uint8_t> raw;
    const std::size_t row_bytes = static_cast<std::size_t>(img.shape.width) * 3;
    raw.reserve((row_bytes + 1) * static_cast<std::size_t>(img.shape.height));
    for (int y = 0; y < img.shape.height; ++y) {
        raw.push_back(0); // filter: none
        raw.insert(raw.end(), rgb.begin() + static_cast<std::ptrdiff_t>(y * row_bytes),
                   rgb.begin() + static_cast<std::ptrdiff_t>((y + 1) * row_bytes));
    }

    std::vector<std::uint8_t> out(kPngMagic.begin(), kPngMagic.end());
    std::vector<std::uint8_t> ihdr;
    put_u32(ihdr, static_cast<std::uint32_t>(img.shape.width));
    put_u32(ihdr, static_cast<std::uint32_t>(img.shape.height));
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(2);  // color type: truecolor
    ihdr.push_back(0);  // compression
    ihdr.push_back(0);  // filter method
    ihdr.push_back(0);  // no interlace
    put_chunk(out, "IHDR", ihdr);
    put_chunk(out, "IDAT", zlib_stored(raw));
    put_chunk(out, "IEND", {});
    write_file_bytes(path, out);
}

void write_image(const std::filesystem::path& path, const Image& img) {
    if (path.extension() == ".ppm") {
        write_ppm(path, img);
    } else {
        write_png(path, img);
    }
}

} // namespace mmc

#include "vlx/image_io.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>

#include "vlx/errors.hpp"

namespace vlx {

namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorCode::Io, "cannot open: " + path.string());
    return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(f)),
                                     std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(ErrorCode::Io, "cannot open for writing: " + path.string());
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!f) throw Error(ErrorCode::Io, "write failed: " + path.string());
}

// PGM token reader that skips whitespace and # comments.
struct PgmParser {
    const std::vector<std::uint8_t>& buf;
    std::size_t pos = 0;

    std::string token() {
        while (pos < buf.size()) {
            const char c = static_cast<char>(buf[pos]);
            if (c == '#') {
                while (pos < buf.size() && buf[pos] != '\n') ++pos;
            } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
                ++pos;
            } else {
                break;
            }
        }
        std::size_t start = pos;
        while (pos < buf.size() && !std::isspace(buf[pos])) ++pos;
        return std::string(buf.begin() + start, buf.begin() + pos);
    }

    std::size_t number(const char* what) {
        const std::string t = token();
        if (t.empty()) throw Error(ErrorCode::Format, std::string("pgm: missing ") + what);
        std::size_t v = 0;
        for (char c : t) {
            if (c < '0' || c > '9') {
                throw Error(ErrorCode::Format, std::string("pgm: bad ") + what + " '" + t + "'");
            }
            v = v * 10 + std::size_t(c - '0');
        }
        return v;
    }
};

constexpr std::uint8_t kPngSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(std::uint8_t(v >> 24));
    out.push_back(std::uint8_t(v >> 16));
    out.push_back(std::uint8_t(v >> 8));
    out.push_back(std::uint8_t(v));
}

std::uint32_t get_be32(const std::uint8_t* p) {
    return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
           (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

void append_chunk(std::vector<std::uint8_t>& out, const char type[4],
                  const std::vector<std::uint8_t>& payload) {
    put_be32(out, static_cast<std::uint32_t>(payload.size()));
    const std::size_t crc_start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), payload.begin(), payload.end());
    const uLong crc = crc32(0, out.data() + crc_start, static_cast<uInt>(out.size() - crc_start));
    put_be32(out, static_cast<std::uint32_t>(crc));
}

std::vector<std::uint8_t> zlib_deflate(const std::vector<std::uint8_t>& raw) {
    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> out(bound);
    if (compress2(out.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK) {
        throw Error(ErrorCode::Internal, "png: deflate failed");
    }
    out.resize(bound);
    return out;
}

std::vector<std::uint8_t> zlib_inflate(const std::vector<std::uint8_t>& compressed,
                                       std::size_t expected_size) {
    std::vector<std::uint8_t> out(expected_size);
    uLongf size = static_cast<uLongf>(expected_size);
    if (uncompress(out.data(), &size, compressed.data(),
                   static_cast<uLong>(compressed.size())) != Z_OK ||
        size != expected_size) {
        throw Error(ErrorCode::Format, "png: corrupt compressed stream");
    }
    return out;
}

void write_png(const std::filesystem::path& path, std::size_t width, std::size_t height,
               int channels, const std::vector<std::uint8_t>& pixels) {
    std::vector<std::uint8_t> out(kPngSignature, kPngSignature + 8);

    std::vector<std::uint8_t> ihdr;
    put_be32(ihdr, static_cast<std::uint32_t>(width));
    put_be32(ihdr, static_cast<std::uint32_t>(height));
    ihdr.push_back(8);                                  // bit depth
    ihdr.push_back(channels == 1 ? 0 : 2);              // gray / truecolor
    ihdr.push_back(0);                                  // compression
    ihdr.push_back(0);                                  // filter method
    ihdr.push_back(0);                                  // non-interlaced
    append_chunk(out, "IHDR", ihdr);

    const std::size_t stride = width * std::size_t(channels);
    std::vector<std::uint8_t> raw;
    raw.reserve((stride + 1) * height);
    for (std::size_t r = 0; r < height; ++r) {
        raw.push_back(0);  // filter type none
        raw.insert(raw.end(), pixels.begin() + r * stride, pixels.begin() + (r + 1) * stride);
    }
    append_chunk(out, "IDAT", zlib_deflate(raw));
    append_chunk(out, "IEND", {});
    write_file(path, out);
}

int paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

}  // namespace

void write_pgm(const std::filesystem::path& path, const GrayImage& img) {
    std::vector<std::uint8_t> out;
    const std::string header =
        "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    out.insert(out.end(), header.begin(), header.end());
    out.insert(out.end(), img.pixels.begin(), img.pixels.end());
    write_file(path, out);
}

GrayImage read_pgm(const std::filesystem::path& path) {
    const auto buf = read_file(path);
    PgmParser parser{buf};
    const std::string magic = parser.token();
    if (magic != "P5") {
        throw Error(ErrorCode::Format,
                    "pgm: unsupported format '" + magic + "' in " + path.string() +
                        " (only binary P5 is supported)");
    }
    GrayImage img;
    img.width = parser.number("width");
    img.height = parser.number("height");
    const std::size_t maxval = parser.number("maxval");
    if (maxval == 0 || maxval > 255) {
        throw Error(ErrorCode::Format, "pgm: unsupported bit depth (maxval " +
                                           std::to_string(maxval) + ") in " + path.string());
    }
    parser.pos += 1;  // single whitespace byte after maxval
    const std::size_t count = img.width * img.height;
    if (parser.pos + count > buf.size()) {
        throw Error(ErrorCode::Format, "pgm: truncated pixel data in " + path.string());
    }
    img.pixels.assign(buf.begin() + parser.pos, buf.begin() + parser.pos + count);
    return img;
}

void write_png_gray(const std::filesystem::path& path, const GrayImage& img) {
    write_png(path, img.width, img.height, 1, img.pixels);
}

void write_png_rgb(const std::filesystem::path& path, const RgbImage& img) {
    write_png(path, img.width, img.height, 3, img.pixels);
}

GrayImage read_png_gray(const std::filesystem::path& path) {
    const auto buf = read_file(path);
    if (buf.size() < 8 || std::memcmp(buf.data(), kPngSignature, 8) != 0) {
        throw Error(ErrorCode::Format, "png: bad signature in " + path.string());
    }

    std::size_t width = 0, height = 0;
    int bit_depth = -1, color_type = -1;
    std::vector<std::uint8_t> idat;
    std::size_t pos = 8;
    while (pos + 8 <= buf.size()) {
        const std::uint32_t len = get_be32(buf.data() + pos);
        const char* type = reinterpret_cast<const char*>(buf.data() + pos + 4);
        const std::uint8_t* payload = buf.data() + pos + 8;
        if (pos + 12 + len > buf.size()) {
            throw Error(ErrorCode::Format, "png: truncated chunk in " + path.string());
        }
        if (std::memcmp(type, "IHDR", 4) == 0) {
            width = get_be32(payload);
            height = get_be32(payload + 4);
            bit_depth = payload[8];
            color_type = payload[9];
            if (payload[12] != 0) {
                throw Error(ErrorCode::Format, "png: interlaced images unsupported: " + path.string());
            }
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), payload, payload + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            break;
        }
        pos += 12 + len;
    }
    if (width == 0 || height == 0) {
        throw Error(ErrorCode::Format, "png: missing IHDR in " + path.string());
    }
    if (bit_depth != 8 || color_type != 0) {
        throw Error(ErrorCode::Format,
                    "png: only 8-bit grayscale supported, got depth " +
                        std::to_string(bit_depth) + " color type " + std::to_string(color_type) +
                        " in " + path.string());
    }

    const std::size_t stride = width;
    const auto raw = zlib_inflate(idat, (stride + 1) * height);
    GrayImage img;
    img.width = width;
    img.height = height;
    img.pixels.resize(width * height);
    std::vector<std::uint8_t> prev(stride, 0);
    for (std::size_t r = 0; r < height; ++r) {
        const std::uint8_t filter = raw[r * (stride + 1)];
        const std::uint8_t* line = raw.data() + r * (stride + 1) + 1;
        std::uint8_t* out = img.pixels.data() + r * stride;
        for (std::size_t c = 0; c < stride; ++c) {
            const int left = c > 0 ? out[c - 1] : 0;
            const int up = prev[c];
            const int up_left = c > 0 ? prev[c - 1] : 0;
            int v = line[c];
            switch (filter) {
                case 0: break;
                case 1: v += left; break;
                case 2: v += up; break;
                case 3: v += (left + up) / 2; break;
                case 4: v += paeth(left, up, up_left); break;
                default:
                    throw Error(ErrorCode::Format, "png: unknown filter type " +
                                                       std::to_string(filter) + " in " +
                                                       path.string());
            }
            out[c] = std::uint8_t(v & 0xff);
        }
        std::memcpy(prev.data(), out, stride);
    }
    return img;
}

ImageInput load_image(const std::filesystem::path& path, std::size_t target_side) {
    if (target_side == 0) throw Error(ErrorCode::Parameter, "load_image: target side must be > 0");
    std::ifstream probe(path, std::ios::binary);
    if (!probe) throw Error(ErrorCode::Io, "cannot open: " + path.string());
    char head[2] = {0, 0};
    probe.read(head, 2);
    probe.close();

    GrayImage gray;
    if (head[0] == 'P') {
        gray = read_pgm(path);
    } else if (static_cast<std::uint8_t>(head[0]) == 0x89 && head[1] == 'P') {
        gray = read_png_gray(path);
    } else {
        throw Error(ErrorCode::Format, "unsupported image format in " + path.string() +
                                           " (expected P5 PGM or 8-bit grayscale PNG)");
    }

    ImageInput img;
    img.side = target_side;
    img.pixels.resize(target_side * target_side);
    if (gray.width == target_side && gray.height == target_side) {
        for (std::size_t i = 0; i < img.pixels.size(); ++i) {
            img.pixels[i] = double(gray.pixels[i]) / 255.0;
        }
    } else {
        for (std::size_t r = 0; r < target_side; ++r) {
            const std::size_t sr = r * gray.height / target_side;
            for (std::size_t c = 0; c < target_side; ++c) {
                const std::size_t sc = c * gray.width / target_side;
                img.pixels[r * target_side + c] = double(gray.pixels[sr * gray.width + sc]) / 255.0;
            }
        }
    }
    return img;
}

}  // namespace vlx

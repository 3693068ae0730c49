#include "raster_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

namespace dmk::io {

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot open for writing", path.string());
    return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open for reading", path.string());
    return in;
}

// Next whitespace-delimited header token, skipping '#' comments.
std::string token(std::istream& in, const std::filesystem::path& path) {
    std::string t;
    char c;
    while (in.get(c)) {
        if (c == '#' && t.empty()) {
            std::string skip;
            std::getline(in, skip);
            continue;
        }
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!t.empty()) return t;
            continue;
        }
        t.push_back(c);
    }
    if (t.empty()) throw InputError("truncated header", path.string());
    return t;
}

int positive_int(const std::string& s, const std::filesystem::path& path) {
    try {
        std::size_t used = 0;
        const int v = std::stoi(s, &used);
        if (used != s.size() || v < 1) throw InputError("bad header value '" + s + "'", path.string());
        return v;
    } catch (const std::logic_error&) {
        throw InputError("bad header value '" + s + "'", path.string());
    }
}

void put_f32_le(std::vector<unsigned char>& buf, double v) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<unsigned char>((bits >> (8 * i)) & 0xffu));
}

double get_f32(const unsigned char* p, bool little) {
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) {
        const unsigned shift = little ? 8u * unsigned(i) : 8u * unsigned(3 - i);
        bits |= std::uint32_t(p[i]) << shift;
    }
    return std::bit_cast<float>(bits);
}

void write_pfm_channels(const std::filesystem::path& path, const std::vector<const Field*>& ch) {
    const Field& f0 = *ch[0];
    auto out = open_out(path);
    out << (ch.size() == 3 ? "PF" : "Pf") << "\n" << f0.cols << " " << f0.rows << "\n-1.0\n";
    std::vector<unsigned char> buf;
    buf.reserve(f0.size() * ch.size() * 4);
    for (int r = f0.rows - 1; r >= 0; --r)
        for (int c = 0; c < f0.cols; ++c)
            for (const Field* f : ch) put_f32_le(buf, f->at(r, c));
    out.write(reinterpret_cast<const char*>(buf.data()), std::streamsize(buf.size()));
    if (!out) throw InputError("write failed", path.string());
}

std::vector<Field> read_pfm_channels(const std::filesystem::path& path, int expect_channels) {
    auto in = open_in(path);
    const std::string magic = token(in, path);
    const int channels = magic == "PF" ? 3 : magic == "Pf" ? 1 : 0;
    if (channels == 0) throw InputError("not a PFM file", path.string());
    if (channels != expect_channels)
        throw InputError("expected " + std::to_string(expect_channels) + " channel PFM", path.string());
    const int w = positive_int(token(in, path), path);
    const int h = positive_int(token(in, path), path);
    double scale = 0.0;
    try {
        scale = std::stod(token(in, path));
    } catch (const std::logic_error&) {
        throw InputError("bad PFM scale", path.string());
    }
    if (scale == 0.0) throw InputError("bad PFM scale", path.string());
    const bool little = scale < 0.0;

    std::vector<unsigned char> buf(std::size_t(w) * h * channels * 4);
    in.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size()));
    if (in.gcount() != std::streamsize(buf.size())) throw InputError("truncated PFM data", path.string());

    std::vector<Field> out(std::size_t(channels), Field(h, w, 0.0));
    std::size_t k = 0;
    for (int r = h - 1; r >= 0; --r)
        for (int c = 0; c < w; ++c)
            for (int ch = 0; ch < channels; ++ch, k += 4) out[std::size_t(ch)].at(r, c) = get_f32(&buf[k], little);
    return out;
}

std::vector<Field> read_pnm(const std::filesystem::path& path, const char* want_magic, int channels) {
    auto in = open_in(path);
    if (token(in, path) != want_magic) throw InputError(std::string("expected ") + want_magic + " file", path.string());
    const int w = positive_int(token(in, path), path);
    const int h = positive_int(token(in, path), path);
    const int maxval = positive_int(token(in, path), path);
    if (maxval > 255) throw InputError("only 8-bit files are supported", path.string());
    std::vector<unsigned char> buf(std::size_t(w) * h * channels);
    in.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size()));
    if (in.gcount() != std::streamsize(buf.size())) throw InputError("truncated image data", path.string());
    std::vector<Field> out(std::size_t(channels), Field(h, w, 0.0));
    for (std::size_t i = 0; i < std::size_t(w) * h; ++i)
        for (int c = 0; c < channels; ++c) out[std::size_t(c)].data[i] = buf[i * channels + c] / double(maxval);
    return out;
}

unsigned char level8(double x) {
    return static_cast<unsigned char>(std::lround(std::clamp(x, 0.0, 1.0) * 255.0));
}

}  // namespace

double quantize8(double x) { return level8(x) / 255.0; }

void write_pfm(const std::filesystem::path& path, const Field& f) { write_pfm_channels(path, {&f}); }

void write_pfm(const std::filesystem::path& path, const Field3& f) {
    if (!f[0].same_shape(f[1]) || !f[0].same_shape(f[2])) throw DimensionError("write_pfm: channel shapes differ");
    write_pfm_channels(path, {&f[0], &f[1], &f[2]});
}

Field read_pfm(const std::filesystem::path& path) { return std::move(read_pfm_channels(path, 1)[0]); }

Field3 read_pfm3(const std::filesystem::path& path) {
    auto ch = read_pfm_channels(path, 3);
    return {std::move(ch[0]), std::move(ch[1]), std::move(ch[2])};
}

void write_ppm(const std::filesystem::path& path, const RgbImage& img) {
    auto out = open_out(path);
    const Field& f0 = img[0];
    out << "P6\n" << f0.cols << " " << f0.rows << "\n255\n";
    std::vector<unsigned char> buf;
    buf.reserve(f0.size() * 3);
    for (std::size_t i = 0; i < f0.size(); ++i)
        for (int c = 0; c < 3; ++c) buf.push_back(level8(img[std::size_t(c)].data[i]));
    out.write(reinterpret_cast<const char*>(buf.data()), std::streamsize(buf.size()));
    if (!out) throw InputError("write failed", path.string());
}

RgbImage read_ppm(const std::filesystem::path& path) {
    auto ch = read_pnm(path, "P6", 3);
    return {std::move(ch[0]), std::move(ch[1]), std::move(ch[2])};
}

void write_pgm(const std::filesystem::path& path, const Field& f) {
    auto out = open_out(path);
    out << "P5\n" << f.cols << " " << f.rows << "\n255\n";
    std::vector<unsigned char> buf(f.size());
    std::transform(f.data.begin(), f.data.end(), buf.begin(), level8);
    out.write(reinterpret_cast<const char*>(buf.data()), std::streamsize(buf.size()));
    if (!out) throw InputError("write failed", path.string());
}

Field read_pgm(const std::filesystem::path& path) { return std::move(read_pnm(path, "P5", 1)[0]); }

}  // namespace dmk::io

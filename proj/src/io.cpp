#include "ape/io.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ape {

namespace {

unsigned char to_byte(double v) {
    if (!(v >= 0.0 && v <= 1.0)) {
        throw std::invalid_argument("encode_pgm: value outside [0,1]");
    }
    return static_cast<unsigned char>(std::lround(255.0 * v));
}

// Reads the next whitespace-delimited header token, skipping '#' comments.
std::string_view next_token(std::string_view bytes, std::size_t& pos) {
    for (;;) {
        while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
        if (pos < bytes.size() && bytes[pos] == '#') {
            while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            continue;
        }
        break;
    }
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    if (start == pos) throw std::runtime_error("decode_pgm: truncated header");
    return bytes.substr(start, pos - start);
}

int parse_int(std::string_view token) {
    int value = 0;
    for (char c : token) {
        if (!std::isdigit(static_cast<unsigned char>(c)) || value > 1'000'000) {
            throw std::runtime_error("decode_pgm: bad header integer");
        }
        value = value * 10 + (c - '0');
    }
    return value;
}

} // namespace

std::string encode_pgm(const Field2D& f) {
    if (f.empty()) throw std::invalid_argument("encode_pgm: empty field");
    std::string out = "P5\n" + std::to_string(f.width()) + " " + std::to_string(f.height()) +
                      "\n255\n";
    out.reserve(out.size() + f.size());
    for (double v : f.values()) out.push_back(static_cast<char>(to_byte(v)));
    return out;
}

Field2D decode_pgm(std::string_view bytes) {
    std::size_t pos = 0;
    if (next_token(bytes, pos) != "P5") throw std::runtime_error("decode_pgm: not a P5 file");
    const int width = parse_int(next_token(bytes, pos));
    const int height = parse_int(next_token(bytes, pos));
    const int maxval = parse_int(next_token(bytes, pos));
    if (width < 1 || height < 1) throw std::runtime_error("decode_pgm: bad dimensions");
    if (maxval != 255) throw std::runtime_error("decode_pgm: only maxval 255 is supported");
    ++pos;  // single whitespace byte before the raster
    const std::size_t n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    if (bytes.size() < pos + n) throw std::runtime_error("decode_pgm: truncated raster");
    Field2D f(width, height);
    for (std::size_t i = 0; i < n; ++i) {
        f[i] = static_cast<double>(static_cast<unsigned char>(bytes[pos + i])) / 255.0;
    }
    return f;
}

void write_pgm(const std::filesystem::path& path, const Field2D& f) {
    write_file_atomic(path, encode_pgm(f));
}

Field2D read_pgm(const std::filesystem::path& path) {
    try {
        return decode_pgm(read_file(path));
    } catch (const std::runtime_error& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
}

Field2D quantize8(const Field2D& f) {
    Field2D out = f;
    for (double& v : out.values()) v = static_cast<double>(to_byte(v)) / 255.0;
    return out;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw std::runtime_error("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

} // namespace ape

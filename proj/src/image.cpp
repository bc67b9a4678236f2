#include "gridlm/image.hpp"

#include <cmath>
#include <fstream>

#include "gridlm/errors.hpp"

namespace gridlm {

namespace {

uint8_t quantize(double v) {
    const double q = std::round(v * 255.0);
    if (q <= 0.0) return 0;
    if (q >= 255.0) return 255;
    return static_cast<uint8_t>(q);
}

int read_pnm_token(std::istream& in) {
    // Skips whitespace and '#' comments per the PNM grammar.
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        } else if (!std::isspace(c)) {
            break;
        }
        c = in.get();
    }
    if (c == EOF) throw ConfigError("pnm: truncated header");
    int value = 0;
    while (c != EOF && std::isdigit(c)) {
        value = value * 10 + (c - '0');
        c = in.get();
    }
    return value;
}

} // namespace

void write_pnm(const Image& img, const std::string& path) {
    if (img.channels != 1 && img.channels != 3) {
        throw ConfigError("pnm: channels must be 1 or 3");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("pnm: cannot open for writing: " + path);
    out << (img.channels == 1 ? "P5" : "P6") << "\n"
        << img.width << " " << img.height << "\n255\n";
    std::vector<uint8_t> bytes(img.pix.size());
    for (size_t i = 0; i < img.pix.size(); ++i) bytes[i] = quantize(img.pix[i]);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ConfigError("pnm: write failed: " + path);
}

Image read_pnm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("pnm: cannot open: " + path);
    char magic[2];
    in.read(magic, 2);
    if (!in || magic[0] != 'P' || (magic[1] != '5' && magic[1] != '6')) {
        throw ConfigError("pnm: expected binary P5/P6: " + path);
    }
    const int channels = magic[1] == '5' ? 1 : 3;
    const int width = read_pnm_token(in);
    const int height = read_pnm_token(in);
    const int maxval = read_pnm_token(in);
    if (maxval != 255) throw ConfigError("pnm: only maxval 255 supported: " + path);
    Image img(height, width, channels);
    std::vector<uint8_t> bytes(img.pix.size());
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!in) throw ConfigError("pnm: truncated pixel data: " + path);
    for (size_t i = 0; i < bytes.size(); ++i) img.pix[i] = bytes[i] / 255.0;
    return img;
}

void write_scaled_pgm(const Tensor& map, const std::string& path) {
    double lo = map.data[0], hi = map.data[0];
    for (double v : map.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    Image img(map.rows, map.cols, 1);
    if (hi == lo) {
        for (double& v : img.pix) v = 1.0;
    } else {
        for (size_t i = 0; i < map.data.size(); ++i) img.pix[i] = (map.data[i] - lo) / (hi - lo);
    }
    write_pnm(img, path);
}

} // namespace gridlm

#include "hsc/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>

namespace hsc {

namespace {

constexpr std::uint32_t kIdxImageMagic = 0x00000803;

std::uint32_t read_be32(std::istream& in) {
    std::uint8_t b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw std::runtime_error("IDX: truncated header");
    return (static_cast<std::uint32_t>(b[0]) << 24) | (static_cast<std::uint32_t>(b[1]) << 16) |
           (static_cast<std::uint32_t>(b[2]) << 8) | b[3];
}

void write_be32(std::ostream& out, std::uint32_t v) {
    const std::uint8_t b[4] = {static_cast<std::uint8_t>(v >> 24), static_cast<std::uint8_t>(v >> 16),
                               static_cast<std::uint8_t>(v >> 8), static_cast<std::uint8_t>(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

} // namespace

std::vector<Image> load_idx_images(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("IDX: cannot open " + path);

    const std::uint32_t magic = read_be32(in);
    if (magic != kIdxImageMagic)
        throw std::runtime_error("IDX: bad magic in " + path + " (expected 0x00000803)");
    const std::uint32_t count = read_be32(in);
    const std::uint32_t rows = read_be32(in);
    const std::uint32_t cols = read_be32(in);
    if (rows != cols) throw std::runtime_error("IDX: non-square images unsupported");
    if (rows == 0 || count == 0) throw std::runtime_error("IDX: empty image file");

    std::vector<std::uint8_t> buf(static_cast<std::size_t>(rows) * cols);
    std::vector<Image> images;
    images.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        if (!in) throw std::runtime_error("IDX: truncated image data in " + path);
        Matrix m(static_cast<int>(rows), static_cast<int>(cols));
        for (std::size_t p = 0; p < buf.size(); ++p) m.data()[p] = buf[p] / 255.0;
        images.emplace_back(std::move(m));
    }
    return images;
}

void save_idx_images(const std::string& path, const std::vector<Image>& images) {
    if (images.empty()) throw std::invalid_argument("save_idx_images: empty image list");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_idx_images: cannot open " + path);
    const int side = images.front().side();
    write_be32(out, kIdxImageMagic);
    write_be32(out, static_cast<std::uint32_t>(images.size()));
    write_be32(out, static_cast<std::uint32_t>(side));
    write_be32(out, static_cast<std::uint32_t>(side));
    std::vector<std::uint8_t> buf(static_cast<std::size_t>(side) * side);
    for (const Image& img : images) {
        if (img.side() != side) throw std::invalid_argument("save_idx_images: mixed sides");
        for (std::size_t p = 0; p < buf.size(); ++p) {
            const double v = std::clamp(img.pixels.data()[p], 0.0, 1.0);
            buf[p] = static_cast<std::uint8_t>(std::lround(v * 255.0));
        }
        out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    }
    if (!out) throw std::runtime_error("save_idx_images: write failure");
}

DatasetSplit split_train_eval(std::vector<Image> all, std::size_t train_count) {
    if (train_count > all.size())
        throw std::invalid_argument("split_train_eval: train_count exceeds dataset size");
    DatasetSplit s;
    s.eval.assign(std::make_move_iterator(all.begin() + static_cast<std::ptrdiff_t>(train_count)),
                  std::make_move_iterator(all.end()));
    all.resize(train_count);
    s.train = std::move(all);
    return s;
}

namespace {

struct Stroke {
    double x0, y0, x1, y1;
};

double dist_to_segment(double px, double py, const Stroke& s) {
    const double dx = s.x1 - s.x0;
    const double dy = s.y1 - s.y0;
    const double len2 = dx * dx + dy * dy;
    double t = len2 > 0.0 ? ((px - s.x0) * dx + (py - s.y0) * dy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double cx = s.x0 + t * dx;
    const double cy = s.y0 + t * dy;
    return std::hypot(px - cx, py - cy);
}

} // namespace

std::vector<Image> synth_dataset(std::size_t count, int side, std::uint64_t seed) {
    if (side < 8) throw std::invalid_argument("synth_dataset: side too small");
    Rng root(seed);

    // Ten glyph classes, each a fixed polyline skeleton of 3-5 strokes in a
    // normalized box; samples jitter the skeleton affinely.
    constexpr int kClasses = 10;
    std::vector<std::vector<Stroke>> skeletons(kClasses);
    for (int c = 0; c < kClasses; ++c) {
        Rng crng = root.stream(0x900 + c);
        const int points = 4 + static_cast<int>(crng.below(3)); // 4..6 control points
        std::vector<double> xs(points), ys(points);
        for (int p = 0; p < points; ++p) {
            xs[p] = crng.uniform(0.2, 0.8);
            ys[p] = crng.uniform(0.2, 0.8);
        }
        for (int p = 0; p + 1 < points; ++p)
            skeletons[c].push_back({xs[p], ys[p], xs[p + 1], ys[p + 1]});
        if (crng.uniform01() < 0.5) // closed loop for some classes
            skeletons[c].push_back({xs[points - 1], ys[points - 1], xs[0], ys[0]});
    }

    std::vector<Image> out;
    out.reserve(count);
    Rng srng = root.stream("samples");
    const double width = 0.06; // stroke Gaussian radius in box units
    for (std::size_t i = 0; i < count; ++i) {
        const int cls = static_cast<int>(i % kClasses);
        const double shift_x = srng.uniform(-0.08, 0.08);
        const double shift_y = srng.uniform(-0.08, 0.08);
        const double scale = srng.uniform(0.85, 1.1);
        const double rot = srng.uniform(-0.25, 0.25);
        const double intensity = srng.uniform(0.75, 1.0);
        const double cr = std::cos(rot), sr = std::sin(rot);

        std::vector<Stroke> strokes;
        strokes.reserve(skeletons[cls].size());
        for (const Stroke& s : skeletons[cls]) {
            auto tf = [&](double x, double y, double& ox, double& oy) {
                const double cx = x - 0.5, cy = y - 0.5;
                ox = 0.5 + scale * (cr * cx - sr * cy) + shift_x;
                oy = 0.5 + scale * (sr * cx + cr * cy) + shift_y;
            };
            Stroke t{};
            tf(s.x0, s.y0, t.x0, t.y0);
            tf(s.x1, s.y1, t.x1, t.y1);
            strokes.push_back(t);
        }

        Matrix m(side, side);
        for (int r = 0; r < side; ++r) {
            for (int c2 = 0; c2 < side; ++c2) {
                const double px = (c2 + 0.5) / side;
                const double py = (r + 0.5) / side;
                double v = 0.0;
                for (const Stroke& s : strokes) {
                    const double dd = dist_to_segment(px, py, s);
                    v = std::max(v, std::exp(-dd * dd / (2.0 * width * width)));
                }
                m(r, c2) = std::clamp(intensity * v, 0.0, 1.0);
            }
        }
        out.emplace_back(std::move(m));
    }
    return out;
}

void write_pgm(const std::string& path, const Matrix& pixels) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_pgm: cannot open " + path);
    out << "P5\n" << pixels.cols() << " " << pixels.rows() << "\n255\n";
    for (int r = 0; r < pixels.rows(); ++r)
        for (int c = 0; c < pixels.cols(); ++c) {
            const double v = std::clamp(pixels(r, c), 0.0, 1.0);
            out.put(static_cast<char>(std::lround(v * 255.0)));
        }
    if (!out) throw std::runtime_error("write_pgm: write failure");
}

namespace {

void skip_pnm_whitespace(std::istream& in) {
    int c = in.peek();
    while (c == ' ' || c == '\n' || c == '\r' || c == '\t' || c == '#') {
        if (c == '#') {
            std::string line;
            std::getline(in, line);
        } else {
            in.get();
        }
        c = in.peek();
    }
}

int read_pnm_int(std::istream& in) {
    skip_pnm_whitespace(in);
    int v = 0;
    in >> v;
    if (!in) throw std::runtime_error("PNM: malformed header");
    return v;
}

} // namespace

Matrix read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_pgm: cannot open " + path);
    std::string magic;
    in >> magic;
    if (magic != "P5") throw std::runtime_error("read_pgm: not a binary PGM");
    const int cols = read_pnm_int(in);
    const int rows = read_pnm_int(in);
    const int maxval = read_pnm_int(in);
    if (maxval != 255) throw std::runtime_error("read_pgm: only maxval 255 supported");
    in.get(); // single whitespace after header
    Matrix m(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            const int v = in.get();
            if (v == EOF) throw std::runtime_error("read_pgm: truncated data");
            m(r, c) = v / 255.0;
        }
    return m;
}

void write_ppm(const std::string& path, const std::array<Matrix, 3>& rgb) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_ppm: cannot open " + path);
    const int rows = rgb[0].rows();
    const int cols = rgb[0].cols();
    for (const Matrix& ch : rgb)
        if (ch.rows() != rows || ch.cols() != cols)
            throw std::invalid_argument("write_ppm: channel shape mismatch");
    out << "P6\n" << cols << " " << rows << "\n255\n";
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            for (int ch = 0; ch < 3; ++ch) {
                const double v = std::clamp(rgb[ch](r, c), 0.0, 1.0);
                out.put(static_cast<char>(std::lround(v * 255.0)));
            }
    if (!out) throw std::runtime_error("write_ppm: write failure");
}

std::array<Matrix, 3> read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_ppm: cannot open " + path);
    std::string magic;
    in >> magic;
    if (magic != "P6") throw std::runtime_error("read_ppm: not a binary PPM");
    const int cols = read_pnm_int(in);
    const int rows = read_pnm_int(in);
    const int maxval = read_pnm_int(in);
    if (maxval != 255) throw std::runtime_error("read_ppm: only maxval 255 supported");
    in.get();
    std::array<Matrix, 3> rgb{Matrix(rows, cols), Matrix(rows, cols), Matrix(rows, cols)};
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            for (int ch = 0; ch < 3; ++ch) {
                const int v = in.get();
                if (v == EOF) throw std::runtime_error("read_ppm: truncated data");
                rgb[ch](r, c) = v / 255.0;
            }
    return rgb;
}

} // namespace hsc

#include "padain/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

namespace padain::data {

void Dataset::gather(const std::vector<int>& idx, Tensor* x, std::vector<int>* y) const {
    const int B = static_cast<int>(idx.size());
    if (B == 0) throw InputError("Dataset::gather: empty index list");
    *x = make_tensor<float>(Shape4{B, channels, image_size, image_size});
    y->resize(idx.size());
    const std::size_t row = image_floats();
    for (int i = 0; i < B; ++i) {
        const int src = idx[static_cast<std::size_t>(i)];
        if (src < 0 || src >= static_cast<int>(size())) {
            throw InputError("Dataset::gather: index " + std::to_string(src) +
                             " out of range for " + std::to_string(size()) + " samples");
        }
        std::copy_n(images.begin() + static_cast<std::ptrdiff_t>(row) * src, row,
                    x->store->begin() + static_cast<std::ptrdiff_t>(row) * i);
        (*y)[static_cast<std::size_t>(i)] = labels[static_cast<std::size_t>(src)];
    }
}

// ===================== synthetic generator =====================

namespace {

// Distinct tints with comparable luminance; the glyph shape is the cue, the
// tint is the confound.
constexpr float kPalette[8][3] = {
    {1.00f, 0.35f, 0.35f}, {0.35f, 1.00f, 0.35f}, {0.40f, 0.50f, 1.00f},
    {1.00f, 0.95f, 0.30f}, {1.00f, 0.45f, 1.00f}, {0.35f, 1.00f, 1.00f},
    {1.00f, 0.70f, 0.35f}, {0.70f, 0.70f, 0.70f},
};

// Grayscale glyph canvases; bg 0.25, ink 0.85, jittered by (dx, dy).
void draw_glyph(int cls, int S, int dx, int dy, std::vector<float>& canvas) {
    std::fill(canvas.begin(), canvas.end(), 0.25f);
    const float ink = 0.85f;
    auto put = [&](int y, int x) {
        y += dy;
        x += dx;
        if (y >= 0 && y < S && x >= 0 && x < S) {
            canvas[static_cast<std::size_t>(y) * S + x] = ink;
        }
    };
    const int c = S / 2;
    const int lo = S / 6, hi = S - S / 6 - 1;
    switch (cls % 8) {
        case 0:  // horizontal bar
            for (int x = lo; x <= hi; ++x) {
                put(c - 1, x);
                put(c, x);
            }
            break;
        case 1:  // vertical bar
            for (int y = lo; y <= hi; ++y) {
                put(y, c - 1);
                put(y, c);
            }
            break;
        case 2:  // cross
            for (int x = lo; x <= hi; ++x) put(c, x);
            for (int y = lo; y <= hi; ++y) put(y, c);
            break;
        case 3: {  // ring
            const double r = S / 3.2;
            for (int y = 0; y < S; ++y) {
                for (int x = 0; x < S; ++x) {
                    const double d = std::hypot(y - (S - 1) / 2.0, x - (S - 1) / 2.0);
                    if (std::fabs(d - r) < 0.9) put(y, x);
                }
            }
            break;
        }
        case 4:  // main diagonal
            for (int y = lo; y <= hi; ++y) {
                put(y, y);
                put(y, y - 1);
            }
            break;
        case 5:  // checkerboard
            for (int y = 0; y < S; ++y) {
                for (int x = 0; x < S; ++x) {
                    if (((y / 4) + (x / 4)) % 2 == 0) put(y, x);
                }
            }
            break;
        case 6:  // dot grid
            for (int y = lo; y <= hi; y += 4) {
                for (int x = lo; x <= hi; x += 4) {
                    put(y, x);
                    put(y, x + 1);
                    put(y + 1, x);
                    put(y + 1, x + 1);
                }
            }
            break;
        case 7:  // frame
            for (int x = lo; x <= hi; ++x) {
                put(lo, x);
                put(hi, x);
            }
            for (int y = lo; y <= hi; ++y) {
                put(y, lo);
                put(y, hi);
            }
            break;
    }
}

Dataset make_split(const SynthConfig& cfg, int per_class, double confound,
                   RngStream& rng) {
    if (cfg.num_classes < 2 || cfg.num_classes > 8) {
        throw InputError("make_synthetic: num_classes must be in 2..8");
    }
    if (cfg.image_size < 8) throw InputError("make_synthetic: image_size must be >= 8");
    if (confound < 0.0 || confound > 1.0) {
        throw InputError("make_synthetic: confound must be in [0, 1]");
    }
    if (per_class < 1) throw InputError("make_synthetic: per-class count must be >= 1");
    const int S = cfg.image_size;
    Dataset d;
    d.image_size = S;
    d.channels = 3;
    d.num_classes = cfg.num_classes;
    const std::size_t plane = static_cast<std::size_t>(S) * S;
    d.images.resize(static_cast<std::size_t>(cfg.num_classes) * per_class * 3 * plane);
    d.labels.resize(static_cast<std::size_t>(cfg.num_classes) * per_class);

    std::vector<float> canvas(plane);
    std::size_t img = 0;
    for (int cls = 0; cls < cfg.num_classes; ++cls) {
        for (int i = 0; i < per_class; ++i, ++img) {
            d.labels[img] = cls;
            // Draw order per image: tint coin (+ miss class), brightness,
            // jitter dx, jitter dy, then per-pixel noise in channel order.
            int tint = cls;
            if (!rng.next_bernoulli(confound)) {
                tint = static_cast<int>(
                    rng.next_below(static_cast<std::uint64_t>(cfg.num_classes)));
            }
            const float bright = static_cast<float>(0.8 + 0.4 * rng.next_uniform());
            const int jmax = std::max(1, S / 8);
            const int dx =
                static_cast<int>(rng.next_below(static_cast<std::uint64_t>(2 * jmax + 1))) -
                jmax;
            const int dy =
                static_cast<int>(rng.next_below(static_cast<std::uint64_t>(2 * jmax + 1))) -
                jmax;
            draw_glyph(cls, S, dx, dy, canvas);
            float* out = d.images.data() + img * 3 * plane;
            for (int ch = 0; ch < 3; ++ch) {
                const float scale = kPalette[tint][ch] * bright;
                for (std::size_t p = 0; p < plane; ++p) {
                    const double v =
                        canvas[p] * scale + cfg.noise_std * rng.next_normal();
                    out[static_cast<std::size_t>(ch) * plane + p] =
                        static_cast<float>(std::clamp(v, 0.0, 1.0));
                }
            }
        }
    }
    return d;
}

}  // namespace

SynthPair make_synthetic(const SynthConfig& cfg) {
    RngStream train_rng = RngStream::derive(cfg.seed, StreamDomain::kDataGen, 0);
    RngStream test_rng = RngStream::derive(cfg.seed, StreamDomain::kDataGen, 1);
    SynthPair pair;
    pair.train = make_split(cfg, cfg.train_per_class, cfg.train_confound, train_rng);
    pair.test = make_split(cfg, cfg.test_per_class, cfg.test_confound, test_rng);
    return pair;
}

// ===================== binary i/o =====================

namespace {

std::vector<unsigned char> read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IngestError("cannot open '" + path + "'");
    is.seekg(0, std::ios::end);
    const std::streamoff len = is.tellg();
    is.seekg(0);
    std::vector<unsigned char> buf(static_cast<std::size_t>(len));
    if (!is.read(reinterpret_cast<char*>(buf.data()), len)) {
        throw IngestError("cannot read '" + path + "'");
    }
    return buf;
}

void append_records(Dataset& d, const std::vector<unsigned char>& buf,
                    const std::string& path) {
    const std::size_t rec = 1 + d.image_floats();
    if (buf.empty() || buf.size() % rec != 0) {
        throw IngestError("'" + path + "': size " + std::to_string(buf.size()) +
                          " is not a multiple of the " + std::to_string(rec) +
                          "-byte record");
    }
    const std::size_t count = buf.size() / rec;
    const std::size_t row = d.image_floats();
    for (std::size_t i = 0; i < count; ++i) {
        const unsigned char* r = buf.data() + i * rec;
        const int label = static_cast<int>(r[0]);
        if (label >= d.num_classes) {
            throw IngestError("'" + path + "': label " + std::to_string(label) +
                              " out of range [0, " + std::to_string(d.num_classes) + ")");
        }
        d.labels.push_back(label);
        for (std::size_t p = 0; p < row; ++p) {
            d.images.push_back(static_cast<float>(r[1 + p]) / 255.0f);
        }
    }
}

}  // namespace

Dataset load_binary(const std::string& path, int image_size, int channels,
                    int num_classes) {
    Dataset d;
    d.image_size = image_size;
    d.channels = channels;
    d.num_classes = num_classes;
    append_records(d, read_file(path), path);
    return d;
}

Dataset load_cifar10(const std::string& dir, bool train) {
    Dataset d;
    d.image_size = 32;
    d.channels = 3;
    d.num_classes = 10;
    const std::vector<std::string> names =
        train ? std::vector<std::string>{"data_batch_1.bin", "data_batch_2.bin",
                                         "data_batch_3.bin", "data_batch_4.bin",
                                         "data_batch_5.bin"}
              : std::vector<std::string>{"test_batch.bin"};
    for (const std::string& name : names) {
        const std::string path = dir + "/" + name;
        if (!std::filesystem::exists(path)) {
            throw IngestError("CIFAR-10 file missing: '" + path + "'");
        }
        append_records(d, read_file(path), path);
    }
    return d;
}

void export_binary(const Dataset& d, const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IngestError("cannot open '" + path + "' for writing");
    const std::size_t row = d.image_floats();
    std::vector<unsigned char> rec(1 + row);
    for (std::size_t i = 0; i < d.size(); ++i) {
        rec[0] = static_cast<unsigned char>(d.labels[i]);
        const float* img = d.images.data() + i * row;
        for (std::size_t p = 0; p < row; ++p) {
            const float v = std::clamp(img[p], 0.0f, 1.0f);
            rec[1 + p] = static_cast<unsigned char>(std::lround(v * 255.0f));
        }
        os.write(reinterpret_cast<const char*>(rec.data()),
                 static_cast<std::streamsize>(rec.size()));
    }
    if (!os) throw IngestError("write to '" + path + "' failed");
}

void export_synth(const SynthPair& pair, const SynthConfig& cfg, const std::string& dir) {
    std::filesystem::create_directories(dir);
    export_binary(pair.train, dir + "/synth_train.bin");
    export_binary(pair.test, dir + "/synth_test.bin");
    std::ofstream os(dir + "/synth_meta.txt", std::ios::trunc);
    if (!os) throw IngestError("cannot open '" + dir + "/synth_meta.txt' for writing");
    char buf[64];
    os << "format=label_byte_then_channel_planar_u8\n";
    os << "num_classes=" << cfg.num_classes << '\n';
    os << "image_size=" << cfg.image_size << '\n';
    os << "train_per_class=" << cfg.train_per_class << '\n';
    os << "test_per_class=" << cfg.test_per_class << '\n';
    std::snprintf(buf, sizeof(buf), "%.17g", cfg.train_confound);
    os << "train_confound=" << buf << '\n';
    std::snprintf(buf, sizeof(buf), "%.17g", cfg.test_confound);
    os << "test_confound=" << buf << '\n';
    std::snprintf(buf, sizeof(buf), "%.17g", cfg.noise_std);
    os << "noise_std=" << buf << '\n';
    os << "seed=" << cfg.seed << '\n';
}

SynthPair load_synth_dir(const std::string& dir) {
    const std::string meta_path = dir + "/synth_meta.txt";
    std::ifstream is(meta_path);
    if (!is) throw IngestError("cannot open '" + meta_path + "'");
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(is, line)) {
        const std::size_t eq = line.find('=');
        if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    for (const char* key : {"num_classes", "image_size"}) {
        if (kv.find(key) == kv.end()) {
            throw IngestError("'" + meta_path + "': missing key '" + std::string(key) + "'");
        }
    }
    const int classes = std::stoi(kv["num_classes"]);
    const int size = std::stoi(kv["image_size"]);
    SynthPair pair;
    pair.train = load_binary(dir + "/synth_train.bin", size, 3, classes);
    pair.test = load_binary(dir + "/synth_test.bin", size, 3, classes);
    return pair;
}

// ===================== augmentation =====================

Tensor augment_batch(const Tensor& x, RngStream& stream, int pad, double max_rot_deg,
                     bool hflip) {
    if (pad < 0) throw InputError("augment_batch: pad must be >= 0");
    if (max_rot_deg < 0.0) throw InputError("augment_batch: max_rot_deg must be >= 0");
    const int N = x.shape.n, C = x.shape.c, H = x.shape.h, W = x.shape.w;
    Tensor out = make_tensor<float>(x.shape);
    for (int n = 0; n < N; ++n) {
        const int oy = pad > 0 ? static_cast<int>(stream.next_below(
                                     static_cast<std::uint64_t>(2 * pad + 1)))
                               : 0;
        const int ox = pad > 0 ? static_cast<int>(stream.next_below(
                                     static_cast<std::uint64_t>(2 * pad + 1)))
                               : 0;
        const double theta =
            max_rot_deg > 0.0
                ? (2.0 * stream.next_uniform() - 1.0) * max_rot_deg * std::numbers::pi / 180.0
                : 0.0;
        const bool flip = hflip && stream.next_bernoulli(0.5);
        const double cy = (H - 1) / 2.0, cx = (W - 1) / 2.0;
        const double ct = std::cos(theta), st = std::sin(theta);
        for (int c = 0; c < C; ++c) {
            const float* src = x.data() + (static_cast<std::size_t>(n) * C + c) *
                                              static_cast<std::size_t>(H) * W;
            float* dst = out.data() + (static_cast<std::size_t>(n) * C + c) *
                                          static_cast<std::size_t>(H) * W;
            for (int y = 0; y < H; ++y) {
                for (int xx = 0; xx < W; ++xx) {
                    const double px = flip ? (W - 1 - xx) : xx;
                    // Rotate about the center, then undo the pad-and-crop shift.
                    const double rx = ct * (px - cx) + st * (y - cy) + cx;
                    const double ry = -st * (px - cx) + ct * (y - cy) + cy;
                    const double sx = rx + ox - pad;
                    const double sy = ry + oy - pad;
                    const int x0 = static_cast<int>(std::floor(sx));
                    const int y0 = static_cast<int>(std::floor(sy));
                    const double fx = sx - x0, fy = sy - y0;
                    double acc = 0.0;
                    for (int dyy = 0; dyy <= 1; ++dyy) {
                        for (int dxx = 0; dxx <= 1; ++dxx) {
                            const int yy = y0 + dyy, xc = x0 + dxx;
                            if (yy < 0 || yy >= H || xc < 0 || xc >= W) continue;
                            const double wgt = (dxx == 0 ? 1.0 - fx : fx) *
                                               (dyy == 0 ? 1.0 - fy : fy);
                            acc += wgt * src[static_cast<std::size_t>(yy) * W + xc];
                        }
                    }
                    dst[static_cast<std::size_t>(y) * W + xx] = static_cast<float>(acc);
                }
            }
        }
    }
    return out;
}

// ===================== ppm =====================

void write_ppm(const std::string& path, const float* img, int h, int w) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IngestError("cannot open '" + path + "' for writing");
    os << "P6\n" << w << " " << h << "\n255\n";
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (std::size_t p = 0; p < plane; ++p) {
        for (int c = 0; c < 3; ++c) {
            const float v = std::clamp(img[static_cast<std::size_t>(c) * plane + p], 0.0f, 1.0f);
            os.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0f))));
        }
    }
    if (!os) throw IngestError("write to '" + path + "' failed");
}

Tensor read_ppm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IngestError("cannot open '" + path + "'");
    std::string magic;
    int w = 0, h = 0, maxval = 0;
    is >> magic;
    if (magic != "P6") throw IngestError("'" + path + "': not a binary PPM (P6)");
    // Header tokens may be separated by whitespace or comment lines.
    auto next_int = [&](int* out) {
        for (;;) {
            int ch = is.peek();
            if (ch == '#') {
                std::string comment;
                std::getline(is, comment);
            } else if (std::isspace(ch)) {
                is.get();
            } else {
                break;
            }
        }
        if (!(is >> *out)) throw IngestError("'" + path + "': malformed PPM header");
    };
    next_int(&w);
    next_int(&h);
    next_int(&maxval);
    if (maxval != 255) throw IngestError("'" + path + "': maxval must be 255");
    is.get();  // single whitespace after header
    std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * 3);
    if (!is.read(reinterpret_cast<char*>(raw.data()),
                 static_cast<std::streamsize>(raw.size()))) {
        throw IngestError("'" + path + "': truncated pixel data");
    }
    Tensor t = make_tensor<float>(Shape4{1, 3, h, w});
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (std::size_t p = 0; p < plane; ++p) {
        for (int c = 0; c < 3; ++c) {
            (*t.store)[static_cast<std::size_t>(c) * plane + p] =
                static_cast<float>(raw[p * 3 + static_cast<std::size_t>(c)]) / 255.0f;
        }
    }
    return t;
}

std::vector<double> image_channel_means(const Tensor& batch, int index) {
    if (index < 0 || index >= batch.shape.n) {
        throw InputError("image_channel_means: index out of range");
    }
    const int C = batch.shape.c;
    const std::size_t plane = batch.shape.plane();
    std::vector<double> means(static_cast<std::size_t>(C), 0.0);
    for (int c = 0; c < C; ++c) {
        const float* p = batch.data() +
                         (static_cast<std::size_t>(index) * C + c) * plane;
        double s = 0.0;
        for (std::size_t i = 0; i < plane; ++i) s += p[i];
        means[static_cast<std::size_t>(c)] = s / static_cast<double>(plane);
    }
    return means;
}

}  // namespace padain::data

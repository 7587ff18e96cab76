#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "latsim/rng.hpp"
#include "latsim/types.hpp"

namespace latsim {

/// Input to the toy detector: n features in [0, 1].
struct ToyImage {
    std::vector<double> pixels;

    void validate() const {
        for (double p : pixels)
            if (!(p >= 0.0 && p <= 1.0)) throw SimError("ToyImage: pixels must lie in [0, 1]");
    }
};

struct DecodeResult {
    std::vector<int> tokens; // emitted tokens, EOS included when reached
    int count = 0;           // tokens.size(); excludes the implicit SOS
    bool hit_cap = false;
};

struct DetectorConfig {
    std::uint64_t seed = 3;
    int n = 64;
    int hidden = 32;
    int vocab = 20;
    int target_benign_count = 10; // calibration target for the reference image
};

/// Miniature autoregressive object-description decoder. One recurrent
/// tanh layer conditioned on the image through a fixed input projection;
/// greedy argmax decoding runs until EOS or the hard cap.
///
/// Construction calibrates the EOS bias so the seed's reference image
/// decodes to roughly target_benign_count tokens, then fixes the cap at
/// 32x the benign count. With the per-token cost calibrated to a 0.1 s
/// benign inference, a cap-length decode therefore costs 3.2 s.
class ToyDetector {
  public:
    static constexpr int kSos = 0;
    static constexpr int kEos = 1;

    explicit ToyDetector(const DetectorConfig& cfg = {}) : n_(cfg.n), h_(cfg.hidden), v_(cfg.vocab) {
        if (n_ < 1 || h_ < 1 || v_ < 3)
            throw SimError("ToyDetector: need n >= 1, hidden >= 1, vocab >= 3");
        Rng rng(cfg.seed);
        auto fill = [&](std::vector<double>& m, std::size_t count, double scale) {
            m.resize(count);
            for (auto& w : m) w = rng.gaussian(0.0, scale);
        };
        double in_scale = 1.0 / std::sqrt(static_cast<double>(n_));
        double h_scale = 1.0 / std::sqrt(static_cast<double>(h_));
        fill(w_in_, static_cast<std::size_t>(h_) * n_, in_scale);
        fill(b_in_, h_, 0.1);
        fill(embed_, static_cast<std::size_t>(v_) * h_, h_scale);
        fill(w_h_, static_cast<std::size_t>(h_) * h_, h_scale);
        fill(w_o_, static_cast<std::size_t>(v_) * h_, h_scale);
        fill(b_o_, v_, 0.1);

        reference_.pixels.resize(n_);
        Rng img_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
        for (auto& p : reference_.pixels) p = img_rng.canonical();

        calibrate_eos_bias(cfg.target_benign_count);
    }

    int input_size() const { return n_; }
    int hidden_size() const { return h_; }
    int vocab_size() const { return v_; }
    int max_len() const { return max_len_; }
    int benign_count() const { return benign_count_; }
    const ToyImage& reference_image() const { return reference_; }

    /// Greedy decode: emit argmax tokens until EOS or max_len.
    DecodeResult decode(const ToyImage& img) const { return decode_capped(img, max_len_); }

    /// Sum over decode steps of log p(EOS); lower means EOS is less likely
    /// along the greedy path, hence longer expected decoding.
    double eos_logprob_loss(const ToyImage& img) const { return loss_impl(img, nullptr); }

    /// Loss plus its analytic gradient with respect to the image, by
    /// backpropagation through the recurrence with the greedy token path
    /// held fixed.
    double eos_logprob_loss_grad(const ToyImage& img, std::vector<double>& grad) const {
        return loss_impl(img, &grad);
    }

    void save(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw SimError("ToyDetector::save: cannot open " + path);
        Header hdr;
        hdr.n = static_cast<std::uint16_t>(n_);
        hdr.hidden = static_cast<std::uint16_t>(h_);
        hdr.vocab = static_cast<std::uint16_t>(v_);
        hdr.max_len = static_cast<std::uint32_t>(max_len_);
        out.write(reinterpret_cast<const char*>(&hdr), sizeof hdr);
        auto dump = [&](const std::vector<double>& m) {
            out.write(reinterpret_cast<const char*>(m.data()),
                      static_cast<std::streamsize>(m.size() * sizeof(double)));
        };
        dump(w_in_);
        dump(b_in_);
        dump(embed_);
        dump(w_h_);
        dump(w_o_);
        dump(b_o_);
        dump(reference_.pixels);
        if (!out) throw SimError("ToyDetector::save: write failed for " + path);
    }

    static ToyDetector load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw SimError("ToyDetector::load: cannot open " + path);
        Header hdr;
        in.read(reinterpret_cast<char*>(&hdr), sizeof hdr);
        if (!in || hdr.magic != kMagic || hdr.version != 1)
            throw SimError("ToyDetector::load: bad header in " + path);
        ToyDetector d(Unserialized{}, hdr.n, hdr.hidden, hdr.vocab, hdr.max_len);
        auto slurp = [&](std::vector<double>& m, std::size_t count) {
            m.resize(count);
            in.read(reinterpret_cast<char*>(m.data()),
                    static_cast<std::streamsize>(count * sizeof(double)));
        };
        std::size_t n = hdr.n, h = hdr.hidden, v = hdr.vocab;
        slurp(d.w_in_, h * n);
        slurp(d.b_in_, h);
        slurp(d.embed_, v * h);
        slurp(d.w_h_, h * h);
        slurp(d.w_o_, v * h);
        slurp(d.b_o_, v);
        slurp(d.reference_.pixels, n);
        if (!in) throw SimError("ToyDetector::load: truncated file " + path);
        d.benign_count_ = d.decode(d.reference_).count;
        return d;
    }

  private:
    struct Header {
        std::uint32_t magic = kMagic;
        std::uint16_t version = 1;
        std::uint16_t n = 0;
        std::uint16_t hidden = 0;
        std::uint16_t vocab = 0;
        std::uint32_t max_len = 0;
    };
    static_assert(sizeof(Header) == 16);
    static constexpr std::uint32_t kMagic = 0x54454454; // "TDET" little-endian

    struct Unserialized {};
    ToyDetector(Unserialized, int n, int h, int v, int max_len)
        : n_(n), h_(h), v_(v), max_len_(max_len) {}

    void check_image(const ToyImage& img) const {
        if (static_cast<int>(img.pixels.size()) != n_)
            throw SimError("ToyDetector: image size mismatch");
        img.validate();
    }

    // u = W_in x + b_in, shared by every decode step.
    std::vector<double> input_projection(const ToyImage& img) const {
        std::vector<double> u(h_);
        for (int j = 0; j < h_; ++j) {
            double s = b_in_[j];
            const double* row = &w_in_[static_cast<std::size_t>(j) * n_];
            for (int i = 0; i < n_; ++i) s += row[i] * img.pixels[i];
            u[j] = s;
        }
        return u;
    }

    void step_hidden(const std::vector<double>& h_prev, int prev_token,
                     const std::vector<double>& u, std::vector<double>& pre,
                     std::vector<double>& h_out) const {
        const double* emb = &embed_[static_cast<std::size_t>(prev_token) * h_];
        for (int j = 0; j < h_; ++j) {
            double s = u[j] + emb[j];
            const double* row = &w_h_[static_cast<std::size_t>(j) * h_];
            for (int k = 0; k < h_; ++k) s += row[k] * h_prev[k];
            pre[j] = s;
            h_out[j] = std::tanh(s);
        }
    }

    void logits_of(const std::vector<double>& h, std::vector<double>& logits) const {
        for (int c = 0; c < v_; ++c) {
            double s = b_o_[c];
            const double* row = &w_o_[static_cast<std::size_t>(c) * h_];
            for (int k = 0; k < h_; ++k) s += row[k] * h[k];
            logits[c] = s;
        }
    }

    static int argmax(const std::vector<double>& xs) {
        return static_cast<int>(std::max_element(xs.begin(), xs.end()) - xs.begin());
    }

    static double log_softmax_at(const std::vector<double>& logits, int idx,
                                 std::vector<double>* probs) {
        double m = *std::max_element(logits.begin(), logits.end());
        double z = 0.0;
        for (double l : logits) z += std::exp(l - m);
        double log_z = m + std::log(z);
        if (probs) {
            probs->resize(logits.size());
            for (std::size_t i = 0; i < logits.size(); ++i)
                (*probs)[i] = std::exp(logits[i] - log_z);
        }
        return logits[idx] - log_z;
    }

    DecodeResult decode_capped(const ToyImage& img, int cap) const {
        check_image(img);
        DecodeResult res;
        std::vector<double> u = input_projection(img);
        std::vector<double> h(h_), pre(h_), logits(v_);
        for (int j = 0; j < h_; ++j) h[j] = std::tanh(u[j]);
        int prev = kSos;
        std::vector<double> h_next(h_);
        for (int t = 0; t < cap; ++t) {
            step_hidden(h, prev, u, pre, h_next);
            h.swap(h_next);
            logits_of(h, logits);
            int tok = argmax(logits);
            res.tokens.push_back(tok);
            prev = tok;
            if (tok == kEos) break;
        }
        res.count = static_cast<int>(res.tokens.size());
        res.hit_cap = res.count == cap && (res.tokens.empty() || res.tokens.back() != kEos);
        return res;
    }

    double loss_impl(const ToyImage& img, std::vector<double>* grad) const {
        check_image(img);
        std::vector<double> u = input_projection(img);

        // Forward pass, keeping per-step hidden states for backprop.
        std::vector<std::vector<double>> hs; // hs[0] = h_0, hs[t] = state after step t
        hs.reserve(static_cast<std::size_t>(max_len_) + 1);
        hs.emplace_back(h_);
        for (int j = 0; j < h_; ++j) hs[0][j] = std::tanh(u[j]);
        std::vector<int> path;
        std::vector<std::vector<double>> dh_logit; // dL/dh_t contribution from step t's logits
        std::vector<double> logits(v_), probs, pre(h_);
        double loss = 0.0;
        int prev = kSos;
        for (int t = 1; t <= max_len_; ++t) {
            hs.emplace_back(h_);
            step_hidden(hs[t - 1], prev, u, pre, hs[t]);
            logits_of(hs[t], logits);
            loss += log_softmax_at(logits, kEos, grad ? &probs : nullptr);
            if (grad) {
                // dL/dlogits = e_EOS - p; push through W_o.
                dh_logit.emplace_back(h_, 0.0);
                auto& dh = dh_logit.back();
                for (int c = 0; c < v_; ++c) {
                    double dl = (c == kEos ? 1.0 : 0.0) - probs[c];
                    const double* row = &w_o_[static_cast<std::size_t>(c) * h_];
                    for (int k = 0; k < h_; ++k) dh[k] += dl * row[k];
                }
            }
            int tok = argmax(logits);
            path.push_back(tok);
            prev = tok;
            if (tok == kEos) break;
        }

        if (!grad) return loss;

        int T = static_cast<int>(path.size());
        std::vector<double> g = dh_logit[T - 1];
        std::vector<double> du(h_, 0.0), da(h_);
        for (int t = T; t >= 1; --t) {
            const auto& h_t = hs[t];
            for (int j = 0; j < h_; ++j) da[j] = g[j] * (1.0 - h_t[j] * h_t[j]);
            for (int j = 0; j < h_; ++j) du[j] += da[j];
            std::fill(g.begin(), g.end(), 0.0);
            for (int j = 0; j < h_; ++j) {
                const double* row = &w_h_[static_cast<std::size_t>(j) * h_];
                for (int k = 0; k < h_; ++k) g[k] += row[k] * da[j];
            }
            if (t >= 2)
                for (int k = 0; k < h_; ++k) g[k] += dh_logit[t - 2][k];
        }
        // h_0 = tanh(u) contributes once more.
        for (int j = 0; j < h_; ++j) du[j] += g[j] * (1.0 - hs[0][j] * hs[0][j]);

        grad->assign(n_, 0.0);
        for (int j = 0; j < h_; ++j) {
            const double* row = &w_in_[static_cast<std::size_t>(j) * n_];
            for (int i = 0; i < n_; ++i) (*grad)[i] += row[i] * du[j];
        }
        return loss;
    }

    /// Decode length is monotone in the EOS output bias (large bias ends
    /// decoding immediately; large negative bias never ends it). Binary
    /// search for the boundary where the reference image's decode length
    /// crosses the target, land on the short side, and add a hair of
    /// margin so the benign decode is stable.
    void calibrate_eos_bias(int target) {
        const int search_cap = 512;
        auto count_at = [&](double bias) {
            double saved = b_o_[kEos];
            b_o_[kEos] = saved + bias;
            max_len_ = search_cap;
            int c = decode_capped(reference_, search_cap).count;
            b_o_[kEos] = saved;
            return c;
        };
        double lo = -20.0, hi = 20.0;
        if (count_at(lo) <= target || count_at(hi) > target)
            throw SimError("ToyDetector: calibration bracket failed for this seed");
        for (int it = 0; it < 200; ++it) {
            double mid = 0.5 * (lo + hi);
            if (count_at(mid) > target)
                lo = mid;
            else
                hi = mid;
        }
        b_o_[kEos] += hi + 1e-3;
        max_len_ = search_cap;
        benign_count_ = decode_capped(reference_, search_cap).count;
        if (benign_count_ < 4 || benign_count_ > 2 * target)
            throw SimError("ToyDetector: calibrated benign count out of range");
        max_len_ = 32 * benign_count_;
    }

    int n_ = 0;
    int h_ = 0;
    int v_ = 0;
    int max_len_ = 0;
    int benign_count_ = 0;
    std::vector<double> w_in_, b_in_, embed_, w_h_, w_o_, b_o_;
    ToyImage reference_;
};

/// Seconds per emitted token such that the benign decode costs exactly
/// benign_target seconds.
inline double calibrate_latency(const ToyDetector& d, double benign_target) {
    if (!(benign_target > 0.0)) throw SimError("calibrate_latency: target must be positive");
    if (d.benign_count() <= 0) throw SimError("calibrate_latency: benign decode count is zero");
    return benign_target / static_cast<double>(d.benign_count());
}

} // namespace latsim

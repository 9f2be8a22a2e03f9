#include "anomsynth/synthpipe.hpp"

#include <chrono>
#include <cmath>
#include <numbers>

#include "anomsynth/error.hpp"
#include "anomsynth/imageops.hpp"

namespace anomsynth::synthpipe {

using nlohmann::json;

NoiseSchedule::NoiseSchedule(std::string kind, std::vector<double> with_zero)
    : kind_(std::move(kind)), alpha_bar_(std::move(with_zero)) {
    if (alpha_bar_.size() < 2) throw_invalid("noise schedule needs at least one step");
    if (alpha_bar_[0] != 1.0) throw_invalid("alpha_bar_0 must be exactly 1");
    for (std::size_t t = 1; t < alpha_bar_.size(); ++t) {
        if (!(alpha_bar_[t] > 0.0 && alpha_bar_[t] <= 1.0)) {
            throw_invalid("alpha_bar_" + std::to_string(t) + " is outside (0,1]");
        }
        if (!(alpha_bar_[t] < alpha_bar_[t - 1])) {
            throw_invalid("noise schedule must be strictly decreasing at t=" + std::to_string(t));
        }
    }
}

NoiseSchedule NoiseSchedule::cosine(int steps, double final_alpha_bar) {
    if (steps < 1) throw_invalid("schedule needs at least one step");
    if (!(final_alpha_bar > 0.0 && final_alpha_bar < 1.0)) throw_invalid("final alpha_bar must lie in (0,1)");
    const double c = std::acos(std::sqrt(final_alpha_bar)) * 2.0 / std::numbers::pi;
    std::vector<double> ab(static_cast<std::size_t>(steps) + 1);
    ab[0] = 1.0;
    for (int t = 1; t <= steps; ++t) {
        const double v = std::cos(std::numbers::pi / 2.0 * c * t / steps);
        ab[t] = v * v;
    }
    ab[steps] = final_alpha_bar;
    return NoiseSchedule("cosine", std::move(ab));
}

NoiseSchedule NoiseSchedule::from_values(std::string kind, std::vector<double> values) {
    values.insert(values.begin(), 1.0);
    return NoiseSchedule(std::move(kind), std::move(values));
}

double NoiseSchedule::alpha_bar(int t) const {
    if (t < 0 || t > steps()) {
        throw_invalid("timestep " + std::to_string(t) + " outside [0, " + std::to_string(steps()) + "]");
    }
    return alpha_bar_[static_cast<std::size_t>(t)];
}

void to_json(json& j, const NoiseSchedule& s) {
    j = json{{"kind", s.kind()}, {"steps", s.steps()}, {"alpha_bar", s.values()}};
}

void from_json(const json& j, NoiseSchedule& s) {
    const std::string kind = j.value("kind", std::string("cosine"));
    if (j.contains("alpha_bar")) {
        auto values = j.at("alpha_bar").get<std::vector<double>>();
        if (values.empty() || values.front() != 1.0) throw Error(ErrorKind::Config, "alpha_bar must start at 1");
        values.erase(values.begin());
        s = NoiseSchedule::from_values(kind, std::move(values));
    } else if (kind == "cosine") {
        s = NoiseSchedule::cosine(j.value("steps", 20), j.value("final_alpha_bar", 5e-3));
    } else {
        throw Error(ErrorKind::Config, "schedule kind '" + kind + "' needs explicit alpha_bar values");
    }
}

// ---------------------------------------------------------------------------

namespace {

void require_same_shape(const LatentTensor& a, const LatentTensor& b, const char* what) {
    if (!a.same_shape(b)) throw_invalid(std::string(what) + ": latent shape mismatch");
}

}  // namespace

LatentTensor add_noise(const LatentTensor& z, double alpha_bar, const LatentTensor& eps) {
    require_same_shape(z, eps, "add_noise");
    if (!(alpha_bar >= 0.0 && alpha_bar <= 1.0)) throw_invalid("alpha_bar must lie in [0,1]");
    const double s = std::sqrt(alpha_bar);
    const double n = std::sqrt(1.0 - alpha_bar);
    LatentTensor out = z;
    auto& v = out.values();
    const auto& e = eps.values();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = s * v[i] + n * e[i];
    return out;
}

LatentTensor add_noise(const LatentTensor& z, int t, const LatentTensor& eps, const NoiseSchedule& schedule) {
    return add_noise(z, schedule.alpha_bar(t), eps);
}

LatentTensor tali_blend(const LatentTensor& normal, const LatentTensor& texture, const BinaryMask& latent_mask) {
    require_same_shape(normal, texture, "tali_blend");
    if (latent_mask.width() != normal.width() || latent_mask.height() != normal.height()) {
        throw_invalid("tali_blend: latent mask does not match the latent's spatial shape");
    }
    LatentTensor out = normal;
    for (int c = 0; c < normal.channels(); ++c) {
        for (int y = 0; y < normal.height(); ++y) {
            for (int x = 0; x < normal.width(); ++x) {
                if (latent_mask.at(x, y)) out.at(c, y, x) = texture.at(c, y, x);
            }
        }
    }
    return out;
}

LatentTensor ddim_step(const LatentTensor& z_t, double alpha_bar_t, double alpha_bar_prev,
                       const LatentTensor& eps_hat) {
    require_same_shape(z_t, eps_hat, "ddim_step");
    if (!(alpha_bar_t > 0.0 && alpha_bar_t <= 1.0) || !(alpha_bar_prev > 0.0 && alpha_bar_prev <= 1.0)) {
        throw_invalid("ddim_step: alpha_bar values must lie in (0,1]");
    }
    const double sqrt_t = std::sqrt(alpha_bar_t);
    const double noise_t = std::sqrt(1.0 - alpha_bar_t);
    const double sqrt_prev = std::sqrt(alpha_bar_prev);
    const double noise_prev = std::sqrt(1.0 - alpha_bar_prev);
    LatentTensor out = z_t;
    auto& v = out.values();
    const auto& e = eps_hat.values();
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double x0 = (v[i] - noise_t * e[i]) / sqrt_t;
        v[i] = sqrt_prev * x0 + noise_prev * e[i];
    }
    return out;
}

LatentTensor ddim_step(const LatentTensor& z_t, int t, const LatentTensor& eps_hat, const NoiseSchedule& schedule) {
    if (t < 1 || t > schedule.steps()) {
        throw_invalid("ddim_step: timestep " + std::to_string(t) + " outside [1, " + std::to_string(schedule.steps()) + "]");
    }
    return ddim_step(z_t, schedule.alpha_bar(t), schedule.alpha_bar(t - 1), eps_hat);
}

LatentTensor sample_noise(const LatentTensor& like, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    LatentTensor eps(like.channels(), like.height(), like.width());
    for (auto& v : eps.values()) v = normal(rng);
    return eps;
}

// ---------------------------------------------------------------------------

void SynthesisConfig::validate() const {
    const int limit = allow_full_noise ? schedule.steps() + 1 : schedule.steps();
    if (!(t_star > 0 && t_star < limit)) {
        throw Error(ErrorKind::Config, std::string("t_star must satisfy 0 < t_star ") + (allow_full_noise ? "<= " : "< ") +
                                           std::to_string(schedule.steps()) + ", got " + std::to_string(t_star));
    }
}

void to_json(json& j, const SynthesisConfig& c) {
    j = json{{"t_star", c.t_star},
             {"schedule", c.schedule},
             {"prompt_template", c.prompt_template},
             {"refine_polarity", c.refine_polarity == RefinePolarity::Dissimilarity ? "dissimilarity" : "similarity"},
             {"backend_knobs", c.backend_knobs},
             {"allow_full_noise", c.allow_full_noise}};
}

void from_json(const json& j, SynthesisConfig& c) {
    c.t_star = j.value("t_star", c.t_star);
    if (j.contains("schedule")) {
        c.schedule = j.at("schedule").get<NoiseSchedule>();
    } else if (j.contains("steps")) {
        c.schedule = NoiseSchedule::cosine(j.at("steps").get<int>());
    }
    c.prompt_template = j.value("prompt_template", c.prompt_template);
    const std::string polarity = j.value("refine_polarity", std::string("dissimilarity"));
    if (polarity == "dissimilarity") {
        c.refine_polarity = RefinePolarity::Dissimilarity;
    } else if (polarity == "similarity") {
        c.refine_polarity = RefinePolarity::Similarity;
    } else {
        throw Error(ErrorKind::Config, "refine_polarity must be 'dissimilarity' or 'similarity'");
    }
    c.backend_knobs = j.value("backend_knobs", json::object());
    c.allow_full_noise = j.value("allow_full_noise", c.allow_full_noise);
}

std::string fill_prompt(const std::string& tmpl, const std::string& description, const std::string& object_name) {
    std::string out = tmpl;
    auto substitute = [&out](std::string_view key, const std::string& value) {
        for (auto pos = out.find(key); pos != std::string::npos; pos = out.find(key, pos + value.size())) {
            out.replace(pos, key.size(), value);
        }
    };
    substitute("{description}", description);
    substitute("{object}", object_name);
    return out;
}

BinaryMask refine_mask(const Image& x_normal, const Image& x_result, const BinaryMask& m_in, RefinePolarity polarity) {
    if (x_normal.width() != x_result.width() || x_normal.height() != x_result.height()) {
        throw_invalid("refine_mask: image dimensions differ");
    }
    if (m_in.width() != x_normal.width() || m_in.height() != x_normal.height()) {
        throw_invalid("refine_mask: inpainting mask does not match the images");
    }
    const std::size_t area = m_in.count();
    if (area == 0) throw_invalid("refine_mask: inpainting mask is empty");

    const GrayImage a = apply_mask(to_gray(x_normal), m_in);
    const GrayImage b = apply_mask(to_gray(x_result), m_in);
    const GrayImage ssim = imageops::ssim_map(a, b);
    auto s = ssim.values();
    auto bits = m_in.bits();

    auto score = [&](std::size_t i) {
        return polarity == RefinePolarity::Dissimilarity ? 1.0 - static_cast<double>(s[i]) : static_cast<double>(s[i]);
    };
    double sum = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (bits[i]) sum += score(i);
    }
    const double mean = sum / static_cast<double>(area);

    BinaryMask out(m_in.width(), m_in.height());
    auto o = out.bits();
    for (std::size_t i = 0; i < s.size(); ++i) o[i] = (bits[i] && score(i) > mean) ? 1 : 0;
    return out;
}

json record_metadata(const SynthesisRecord& r, bool include_timings) {
    json j{{"object_name", r.object_name},
           {"description", r.description},
           {"asset_id", r.asset_id},
           {"prompt", r.prompt},
           {"seed", r.seed},
           {"t_star", r.t_star},
           {"schedule", r.schedule},
           {"rect", {{"x", r.rect.x}, {"y", r.rect.y}, {"width", r.rect.width}, {"height", r.rect.height}}},
           {"mask_retries", r.mask_retries},
           {"image_size", {{"width", r.x_result.width()}, {"height", r.x_result.height()}}},
           {"m_in_area", r.m_in.count()},
           {"m_result_area", r.m_result.count()},
           {"backends", r.backends}};
    if (include_timings) j["timings_ms"] = r.timings_ms;
    return j;
}

namespace {

Image condition_for(const Inpainter& inpainter, const Image& x_texture) {
    if (inpainter.condition_form() == ConditionForm::RawTexture) return x_texture;
    const BinaryMask edges = imageops::canny(to_gray(x_texture));
    Image out(x_texture.width(), x_texture.height(), 1);
    for (int y = 0; y < out.height(); ++y) {
        for (int x = 0; x < out.width(); ++x) out.at(x, y, 0) = edges.at(x, y) ? 1.0f : 0.0f;
    }
    return out;
}

class StageTimer {
public:
    StageTimer(std::map<std::string, double>& sink, std::string stage)
        : sink_(sink), stage_(std::move(stage)), start_(std::chrono::steady_clock::now()) {}
    ~StageTimer() {
        sink_[stage_] =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::map<std::string, double>& sink_;
    std::string stage_;
    std::chrono::steady_clock::time_point start_;
};

template <typename F>
auto run_stage(const char* stage, std::map<std::string, double>& timings, F&& f) {
    StageTimer timer(timings, stage);
    try {
        return f();
    } catch (const StageError&) {
        throw;
    } catch (const Error& e) {
        throw StageError(stage, e);
    } catch (const std::exception& e) {
        throw StageError(stage, Error(ErrorKind::Transport, e.what()));
    }
}

}  // namespace

SynthesisRecord synthesize(const std::string& object_name, const Image& normal_image,
                           const descmatch::MatchResult& match, const maskgen::MaskBundle& bundle,
                           const SynthesisConfig& config, Inpainter& inpainter, std::mt19937_64& rng,
                           std::uint64_t seed) {
    config.validate();
    SynthesisRecord rec;
    rec.object_name = object_name;
    rec.description = match.descriptor.description;
    rec.asset_id = match.asset_id;
    rec.prompt = fill_prompt(config.prompt_template, rec.description, object_name);
    rec.m_in = bundle.m_in;
    rec.rect = bundle.rect;
    rec.mask_retries = bundle.retries_used;
    rec.seed = seed;
    rec.t_star = config.t_star;
    rec.schedule = config.schedule;
    rec.backends = {inpainter.descriptor()};

    auto& timings = rec.timings_ms;
    const auto [z_normal, z_texture] = run_stage("encode", timings, [&] {
        return std::pair{inpainter.encode(normal_image), inpainter.encode(bundle.x_texture)};
    });

    LatentTensor z = run_stage("initialize", timings, [&] {
        const LatentTensor eps = sample_noise(z_normal, rng);
        const LatentTensor noised_normal = add_noise(z_normal, config.t_star, eps, config.schedule);
        const LatentTensor noised_texture = add_noise(z_texture, config.t_star, eps, config.schedule);
        inpainter.begin_trajectory(eps);
        return tali_blend(noised_normal, noised_texture, bundle.m_texture_latent);
    });

    z = run_stage("denoise", timings, [&] {
        const Image condition = condition_for(inpainter, bundle.x_texture);
        LatentTensor cur = std::move(z);
        for (int t = config.t_star; t >= 1; --t) {
            const LatentTensor eps_hat = inpainter.predict_noise(cur, t, bundle.m_in, condition, rec.prompt);
            cur = ddim_step(cur, t, eps_hat, config.schedule);
        }
        return cur;
    });

    rec.x_result = run_stage("decode", timings, [&] { return inpainter.decode(z); });
    rec.m_result = run_stage("refine", timings, [&] {
        return refine_mask(normal_image, rec.x_result, bundle.m_in, config.refine_polarity);
    });
    return rec;
}

}  // namespace anomsynth::synthpipe

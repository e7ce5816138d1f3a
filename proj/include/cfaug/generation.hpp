#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <fstream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "cfaug/corruption.hpp"
#include "cfaug/error.hpp"
#include "cfaug/lexicon.hpp"
#include "cfaug/polarity.hpp"
#include "cfaug/rng.hpp"

namespace cfaug {

// ---------------------------------------------------------------------------
// Prompt templates
// ---------------------------------------------------------------------------

struct PromptTemplate {
    std::string id;       // "<polarity>/<index>"
    Polarity polarity = Polarity::Neutral;
    std::string pattern;  // e.g. "which is great!"

    bool operator==(const PromptTemplate&) const = default;
};

inline std::vector<PromptTemplate> builtin_templates() {
    return {
        {"negative/0", Polarity::Negative, "which is terrible!"},
        {"negative/1", Polarity::Negative, "which is awful!"},
        {"neutral/0", Polarity::Neutral, "which is okay."},
        {"neutral/1", Polarity::Neutral, "which is ordinary."},
        {"positive/0", Polarity::Positive, "which is great!"},
        {"positive/1", Polarity::Positive, "which is wonderful!"},
    };
}

// File format: "polarity<TAB>pattern" per line; ids are assigned per
// polarity in file order.
inline std::vector<PromptTemplate> load_templates(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open template file: " + path);
    std::vector<PromptTemplate> out;
    std::array<int, 3> next_index{};
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw ParseError(path + ":" + std::to_string(line_no) + ": expected polarity<TAB>pattern");
        PromptTemplate t;
        try {
            t.polarity = parse_polarity(line.substr(0, tab));
        } catch (const std::invalid_argument& e) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
        t.pattern = line.substr(tab + 1);
        if (t.pattern.empty())
            throw ParseError(path + ":" + std::to_string(line_no) + ": empty pattern");
        int idx = next_index[static_cast<size_t>(code(t.polarity))]++;
        t.id = to_string(t.polarity) + "/" + std::to_string(idx);
        out.push_back(std::move(t));
    }
    if (out.empty()) throw ParseError(path + ": no templates");
    return out;
}

inline std::vector<PromptTemplate> templates_for(const std::vector<PromptTemplate>& all, Polarity p) {
    std::vector<PromptTemplate> out;
    for (const auto& t : all)
        if (t.polarity == p) out.push_back(t);
    return out;
}

// The prompt rides after the masked sentence as ", <pattern>".
inline std::string attach_prompt(const CorruptedSample& corrupted, const PromptTemplate& tmpl,
                                 const std::string& mask_token) {
    if (corrupted.spans.empty())
        throw std::invalid_argument("attach_prompt: sample " + corrupted.sample_id + " has no masked spans");
    if (tmpl.pattern.find(mask_token) != std::string::npos)
        throw ConfigError("template " + tmpl.id + " contains the mask token");
    return render(corrupted, mask_token) + ", " + tmpl.pattern;
}

// ---------------------------------------------------------------------------
// Infill backends
// ---------------------------------------------------------------------------

struct InfillRequest {
    std::string text;        // prompted text containing >= 1 mask sentinel
    std::string mask_token;
    int max_words_per_mask = 3;
    Polarity hint_polarity = Polarity::Neutral;
    std::uint64_t seed = 0;
};

class InfillBackend {
  public:
    virtual ~InfillBackend() = default;
    // Returns the text with every sentinel occurrence replaced by words;
    // characters outside the sentinels must come back verbatim.
    virtual std::string run(const InfillRequest& req) = 0;
    virtual std::string name() const = 0;
};

// Pure local backend: fills each sentinel span with 1..max words drawn
// from the hinted polarity's lexicon list. Fully deterministic in the
// request, so reruns are byte-identical.
class LexiconBackend : public InfillBackend {
  public:
    explicit LexiconBackend(Lexicon lexicon) : lexicon_(std::move(lexicon)) {}

    std::string run(const InfillRequest& req) override {
        const auto& words = lexicon_.words(req.hint_polarity);
        if (words.empty())
            throw Error("lexicon has no words for polarity " + to_string(req.hint_polarity));
        if (req.mask_token.empty()) throw std::invalid_argument("infill: empty mask token");
        Rng rng = derive_rng(req.seed, "lexicon-infill");
        std::string out;
        size_t pos = 0;
        int max_words = std::max(1, req.max_words_per_mask);
        for (;;) {
            size_t hit = req.text.find(req.mask_token, pos);
            if (hit == std::string::npos) {
                out.append(req.text, pos, std::string::npos);
                break;
            }
            out.append(req.text, pos, hit - pos);
            int count = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_words)));
            for (int w = 0; w < count; ++w) {
                if (w > 0) out += ' ';
                out += rng.pick(words);
            }
            pos = hit + req.mask_token.size();
        }
        return out;
    }

    std::string name() const override { return "lexicon"; }

  private:
    Lexicon lexicon_;
};

namespace detail {

// Counting semaphore with a runtime limit.
class Slots {
  public:
    explicit Slots(int n) : count_(n) {
        if (n < 1) throw std::invalid_argument("max_in_flight must be >= 1");
    }
    void acquire() {
        std::unique_lock<std::mutex> lock(m_);
        cv_.wait(lock, [&] { return count_ > 0; });
        --count_;
    }
    void release() {
        {
            std::lock_guard<std::mutex> lock(m_);
            ++count_;
        }
        cv_.notify_one();
    }

  private:
    std::mutex m_;
    std::condition_variable cv_;
    int count_;
};

struct SlotGuard {
    Slots& slots;
    explicit SlotGuard(Slots& s) : slots(s) { slots.acquire(); }
    ~SlotGuard() { slots.release(); }
};

}  // namespace detail

// HTTP backend speaking POST {base_url}/infill with a JSON body. Transport
// failures and 5xx responses are retried with exponential backoff; other
// statuses and unusable response bodies fail immediately. At most
// max_in_flight requests are in the air at once.
class RemoteBackend : public InfillBackend {
  public:
    explicit RemoteBackend(std::string base_url, double timeout_secs = 30.0, int max_in_flight = 4,
                           int max_attempts = 3, int backoff_base_ms = 250)
        : base_url_(std::move(base_url)),
          timeout_secs_(timeout_secs),
          slots_(max_in_flight),
          max_attempts_(max_attempts),
          backoff_base_ms_(backoff_base_ms) {
        while (!base_url_.empty() && base_url_.back() == '/') base_url_.pop_back();
        if (base_url_.empty()) throw std::invalid_argument("remote backend needs a base url");
        if (max_attempts_ < 1) throw std::invalid_argument("remote backend needs >= 1 attempt");
    }

    std::string run(const InfillRequest& req) override {
        detail::SlotGuard guard(slots_);
        nlohmann::json body;
        body["text"] = req.text;
        body["mask_token"] = req.mask_token;
        body["max_words_per_mask"] = req.max_words_per_mask;
        body["hint_polarity"] = to_string(req.hint_polarity);
        body["seed"] = req.seed;
        const std::string payload = body.dump();

        std::string last_error;
        for (int attempt = 0; attempt < max_attempts_; ++attempt) {
            if (attempt > 0) {
                auto delay = std::chrono::milliseconds(backoff_base_ms_ << (attempt - 1));
                std::this_thread::sleep_for(delay);
            }
            httplib::Client client(base_url_);
            client.set_connection_timeout(std::chrono::duration<double>(timeout_secs_));
            client.set_read_timeout(std::chrono::duration<double>(timeout_secs_));
            client.set_write_timeout(std::chrono::duration<double>(timeout_secs_));
            httplib::Result res = client.Post("/infill", payload, "application/json");
            if (!res) {
                last_error = "transport failure: " + httplib::to_string(res.error());
                continue;
            }
            if (res->status >= 500) {
                last_error = "server error: status " + std::to_string(res->status);
                continue;
            }
            if (res->status != 200)
                throw TransportError("infill request rejected with status " + std::to_string(res->status));
            try {
                nlohmann::json parsed = nlohmann::json::parse(res->body);
                return parsed.at("text").get<std::string>();
            } catch (const nlohmann::json::exception& e) {
                throw MalformedBackendError(std::string("unusable infill response: ") + e.what());
            }
        }
        throw TransportError("infill failed after " + std::to_string(max_attempts_) +
                             " attempts: " + last_error);
    }

    std::string name() const override { return "remote"; }

  private:
    std::string base_url_;
    double timeout_secs_;
    detail::Slots slots_;
    int max_attempts_;
    int backoff_base_ms_;
};

// Runs the backend and enforces the contract every backend must meet:
// the request must carry at least one sentinel in, and none may survive.
inline std::string infill(InfillBackend& backend, const InfillRequest& req) {
    if (req.mask_token.empty()) throw std::invalid_argument("infill: empty mask token");
    if (req.text.find(req.mask_token) == std::string::npos)
        throw std::invalid_argument("infill: text contains no mask sentinel");
    std::string filled = backend.run(req);
    if (filled.find(req.mask_token) != std::string::npos)
        throw MalformedBackendError("backend \"" + backend.name() + "\" left mask sentinels in its response");
    return filled;
}

// ---------------------------------------------------------------------------
// Prompt stripping
// ---------------------------------------------------------------------------

struct StripResult {
    bool ok = false;
    std::string text;    // candidate sentence when ok
    std::string reason;  // discard reason otherwise
};

namespace detail {

inline bool is_strip_punct(char c) {
    return c == '.' || c == ',' || c == '!' || c == '?' || c == ';' || c == ':';
}

inline std::string rstrip_ws(std::string s) {
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '\n'))
        s.pop_back();
    return s;
}

inline std::string rstrip_soft(std::string s) {
    for (;;) {
        s = rstrip_ws(std::move(s));
        if (!s.empty() && is_strip_punct(s.back()))
            s.pop_back();
        else
            break;
    }
    return s;
}

}  // namespace detail

// Removes the attached prompt from a filled text. The prompt must sit at
// the end, compared modulo trailing whitespace/punctuation; a prompt that
// only shows up mid-text is a discard, not an error.
inline StripResult strip_prompt(const std::string& filled, const PromptTemplate& tmpl) {
    StripResult res;
    const std::string suffix = detail::rstrip_soft(", " + tmpl.pattern);
    const std::string body = detail::rstrip_soft(filled);
    if (suffix.empty() || body.size() <= suffix.size() || !body.ends_with(suffix)) {
        res.reason = "prompt \"" + tmpl.pattern + "\" is not a suffix of the filled text";
        return res;
    }
    std::string candidate = detail::rstrip_ws(body.substr(0, body.size() - suffix.size()));
    if (candidate.empty()) {
        res.reason = "nothing left after removing the prompt";
        return res;
    }
    if (candidate.find(suffix) != std::string::npos) {
        res.reason = "prompt text still present after stripping";
        return res;
    }
    res.ok = true;
    res.text = std::move(candidate);
    return res;
}

// ---------------------------------------------------------------------------
// Candidate generation
// ---------------------------------------------------------------------------

struct GenerationCandidate {
    std::string source_id;
    std::string text;  // stripped candidate sentence
    Polarity target = Polarity::Neutral;
    std::string prompt_id;
    int repeat = 0;
    std::string backend;

    bool operator==(const GenerationCandidate&) const = default;
};

struct DiscardRecord {
    std::string source_id;
    Polarity target = Polarity::Neutral;
    std::string prompt_id;
    int repeat = 0;
    std::string reason;
};

struct GenerationOutcome {
    std::vector<GenerationCandidate> candidates;
    std::vector<DiscardRecord> discards;
};

// One infill round per (template, repeat). Strip failures become discard
// records; backend transport/malformed errors propagate to the caller.
inline GenerationOutcome generate_candidates(const std::string& source_id, const CorruptedSample& corrupted,
                                             Polarity target, const std::vector<PromptTemplate>& templates,
                                             InfillBackend& backend, int n_per_template,
                                             const std::string& mask_token, int max_words_per_mask,
                                             std::uint64_t seed) {
    if (templates.empty()) throw std::invalid_argument("generate_candidates: no templates");
    for (const auto& t : templates)
        if (t.polarity != target)
            throw std::invalid_argument("generate_candidates: template " + t.id + " does not match the target");
    if (n_per_template < 1) throw std::invalid_argument("generate_candidates: n_per_template must be >= 1");

    GenerationOutcome out;
    for (const PromptTemplate& tmpl : templates) {
        for (int rep = 0; rep < n_per_template; ++rep) {
            InfillRequest req;
            req.text = attach_prompt(corrupted, tmpl, mask_token);
            req.mask_token = mask_token;
            req.max_words_per_mask = max_words_per_mask;
            req.hint_polarity = target;
            req.seed = derive_seed(seed, source_id, tmpl.id, rep);
            std::string filled = infill(backend, req);
            StripResult stripped = strip_prompt(filled, tmpl);
            if (stripped.ok) {
                out.candidates.push_back({source_id, stripped.text, target, tmpl.id, rep, backend.name()});
            } else {
                out.discards.push_back({source_id, target, tmpl.id, rep, stripped.reason});
            }
        }
    }
    return out;
}

}  // namespace cfaug

// Kept in its own translation unit: httplib.h is heavy to compile.

#include <httplib.h>

#include <json.hpp>

#include "kcheck/baselines.hpp"
#include "kcheck/error.hpp"

namespace kcheck {

HttpGenerationClient::HttpGenerationClient(std::string url, int max_tokens, double timeout_s)
    : max_tokens_(max_tokens), timeout_s_(timeout_s) {
    const std::string scheme = "http://";
    if (url.rfind(scheme, 0) != 0) throw InputError("generation endpoint must start with http://: " + url);
    const auto slash = url.find('/', scheme.size());
    if (slash == std::string::npos) {
        base_ = url;
        path_ = "/";
    } else {
        base_ = url.substr(0, slash);
        path_ = url.substr(slash);
    }
    if (base_.size() == scheme.size()) throw InputError("generation endpoint has no host: " + url);
}

Generation HttpGenerationClient::generate(const std::string& prompt) {
    httplib::Client client(base_);
    const auto sec = static_cast<time_t>(timeout_s_);
    const auto usec = static_cast<time_t>((timeout_s_ - static_cast<double>(sec)) * 1e6);
    client.set_connection_timeout(sec, usec);
    client.set_read_timeout(sec, usec);
    client.set_write_timeout(sec, usec);

    nlohmann::json body{{"prompt", prompt}, {"max_tokens", max_tokens_}, {"temperature", 0}};
    auto res = client.Post(path_, body.dump(), "application/json");
    if (!res) throw ModelError("request to " + base_ + path_ + " failed: " + httplib::to_string(res.error()));
    if (res->status != 200) {
        throw ModelError("request to " + base_ + path_ + " returned status " + std::to_string(res->status));
    }
    try {
        const auto obj = nlohmann::json::parse(res->body);
        Generation g;
        g.text = obj.at("text").get<std::string>();
        if (auto it = obj.find("tokens"); it != obj.end() && !it->is_null()) {
            g.tokens = it->get<std::vector<std::string>>();
        }
        if (auto it = obj.find("logprobs"); it != obj.end() && !it->is_null()) {
            g.logprobs = it->get<std::vector<double>>();
        }
        return g;
    } catch (const nlohmann::json::exception& e) {
        throw ModelError("malformed response from " + base_ + path_ + ": " + e.what());
    }
}

}  // namespace kcheck

#include "moelm/service.hpp"

#include <cstdio>
#include <regex>
#include <stdexcept>

#include <httplib.h>

#include "moelm/error.hpp"
#include "moelm/random.hpp"

namespace moelm {

ChatService::ChatService(const IntegratedModel& model, DecodeConfig decode, std::uint64_t id_seed)
    : model_(&model), decode_(decode), id_seed_(id_seed) {
  decode_.validate();
}

std::string ChatService::create_session() {
  std::lock_guard lock(mu_);
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(derive_seed(id_seed_, next_id_++)));
  auto s = std::make_shared<ChatSession>();
  s->id = buf;
  sessions_[s->id] = s;
  return s->id;
}

std::shared_ptr<ChatSession> ChatService::find(const std::string& id) const {
  std::lock_guard lock(mu_);
  auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

bool ChatService::has_session(const std::string& id) const { return find(id) != nullptr; }

namespace {

std::string display_text(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (w == kEor || w == kPause || w == kNewline) continue;
    out += (out.empty() ? "" : " ") + w;
  }
  return out;
}

}  // namespace

AgentReply ChatService::post_message(const std::string& id, const std::string& text) {
  auto s = find(id);
  if (!s) throw std::out_of_range("unknown session " + id);
  const auto words = normalize(text);
  if (words.empty()) throw Error("message has no tokens");

  std::lock_guard lock(s->mu);
  std::vector<std::string> context = s->tokens;
  context.emplace_back(kClient);
  context.insert(context.end(), words.begin(), words.end());
  context.emplace_back(kEoc);

  AgentReply reply;
  const auto segments = decode_with_continuation(*model_, context, decode_);
  std::vector<std::string> shown;
  for (const auto& seg : segments) {
    reply.tokens.push_back(seg.words);
    reply.traces.push_back(trace(*model_, seg.context, seg.words));
    reply.segments.push_back(display_text(seg.words));
    if (!reply.segments.back().empty()) shown.push_back(reply.segments.back());
  }

  s->tokens.emplace_back(kClient);
  s->tokens.insert(s->tokens.end(), words.begin(), words.end());
  for (const auto& seg : segments) {
    s->tokens.emplace_back(kAgent);
    for (const auto& w : seg.words) {
      if (w != kEor) s->tokens.push_back(w);
    }
  }
  s->display.push_back({Speaker::Client, text});
  std::string joined;
  for (const auto& x : shown) joined += (joined.empty() ? "" : " ") + x;
  s->display.push_back({Speaker::Agent, joined});
  return reply;
}

std::vector<DisplayTurn> ChatService::history(const std::string& id) const {
  auto s = find(id);
  if (!s) throw std::out_of_range("unknown session " + id);
  std::lock_guard lock(s->mu);
  return s->display;
}

nlohmann::json reply_to_json(const AgentReply& r) {
  nlohmann::json traces = nlohmann::json::array();
  for (const auto& t : r.traces) traces.push_back(trace_to_json(t));
  return {{"segments", r.segments}, {"tokens", r.tokens}, {"trace", traces}};
}

namespace {

nlohmann::json error_body(const std::string& message) { return {{"error", message}}; }

nlohmann::json field_errors(const std::vector<std::pair<std::string, std::string>>& errs) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& [f, m] : errs) arr.push_back({{"field", f}, {"message", m}});
  return {{"error", "invalid request body"}, {"fields", arr}};
}

}  // namespace

ChatService::Response ChatService::handle(const std::string& method, const std::string& path,
                                          const std::string& body) {
  static const std::regex message_re("^/session/([^/]+)/message$");
  static const std::regex history_re("^/session/([^/]+)/history$");
  std::smatch m;
  if (path == "/healthz") {
    if (method != "GET") return {405, error_body("method not allowed")};
    return {200, {{"status", "ok"}}};
  }
  if (path == "/session") {
    if (method != "POST") return {405, error_body("method not allowed")};
    return {201, {{"session_id", create_session()}}};
  }
  if (std::regex_match(path, m, history_re)) {
    if (method != "GET") return {405, error_body("method not allowed")};
    const std::string id = m[1];
    if (!has_session(id)) return {404, error_body("unknown session " + id)};
    nlohmann::json turns = nlohmann::json::array();
    for (const auto& t : history(id)) {
      turns.push_back({{"speaker", std::string(speaker_name(t.speaker))}, {"text", t.text}});
    }
    return {200, {{"session_id", id}, {"turns", turns}}};
  }
  if (std::regex_match(path, m, message_re)) {
    if (method != "POST") return {405, error_body("method not allowed")};
    const std::string id = m[1];
    if (!has_session(id)) return {404, error_body("unknown session " + id)};
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception&) {
      return {400, field_errors({{"body", "must be a JSON object"}})};
    }
    if (!j.is_object()) return {400, field_errors({{"body", "must be a JSON object"}})};
    if (!j.contains("text")) return {400, field_errors({{"text", "required"}})};
    if (!j["text"].is_string()) return {400, field_errors({{"text", "must be a string"}})};
    const std::string text = j["text"].get<std::string>();
    if (normalize(text).empty()) return {400, field_errors({{"text", "must not be empty"}})};
    try {
      return {200, reply_to_json(post_message(id, text))};
    } catch (const std::out_of_range&) {
      return {404, error_body("unknown session " + id)};
    }
  }
  return {404, error_body("no route for " + path)};
}

void ChatService::register_routes(httplib::Server& server) {
  auto bind = [this](const httplib::Request& req, httplib::Response& res) {
    Response r;
    try {
      r = handle(req.method, req.path, req.body);
    } catch (const std::exception& e) {
      r = {500, error_body(e.what())};
    }
    res.status = r.status;
    // The browser client may be served from another origin.
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_content(r.body.dump(), "application/json");
  };
  server.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });
  server.Get(R"(/healthz)", bind);
  server.Post(R"(/session)", bind);
  server.Post(R"(/session/[^/]+/message)", bind);
  server.Get(R"(/session/[^/]+/history)", bind);
}

void serve(ChatService& service, const std::string& host, int port) {
  httplib::Server server;
  service.register_routes(server);
  if (!server.listen(host, port)) throw Error("cannot listen on " + host + ":" + std::to_string(port));
}

}  // namespace moelm

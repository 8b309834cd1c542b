#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "moelm/decoder.hpp"
#include "moelm/eval.hpp"
#include "moelm/moe.hpp"

namespace httplib {
class Server;
}

namespace moelm {

struct DisplayTurn {
  Speaker speaker;
  std::string text;
};

struct ChatSession {
  std::string id;
  std::vector<DisplayTurn> display;
  std::vector<std::string> tokens;  // context form, without the trailing <EOC>
  std::mutex mu;
};

struct AgentReply {
  std::vector<std::string> segments;            // display strings
  std::vector<std::vector<std::string>> tokens;  // per segment, markers included
  std::vector<GateTrace> traces;                 // aligned with tokens
};

// Session store plus the reply logic, independent of any transport. The
// model is borrowed and only read.
class ChatService {
 public:
  ChatService(const IntegratedModel& model, DecodeConfig decode, std::uint64_t id_seed = 0);

  std::string create_session();
  bool has_session(const std::string& id) const;
  // Throws std::out_of_range for an unknown session.
  AgentReply post_message(const std::string& id, const std::string& text);
  std::vector<DisplayTurn> history(const std::string& id) const;

  // Method/path/body dispatch used by the HTTP layer; returns status + JSON.
  struct Response {
    int status = 200;
    nlohmann::json body;
  };
  Response handle(const std::string& method, const std::string& path, const std::string& body);

  void register_routes(httplib::Server& server);

 private:
  std::shared_ptr<ChatSession> find(const std::string& id) const;

  const IntegratedModel* model_;
  DecodeConfig decode_;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<ChatSession>> sessions_;
  std::uint64_t id_seed_;
  std::uint64_t next_id_ = 0;
};

nlohmann::json reply_to_json(const AgentReply& r);

// Blocks serving on host:port until the server is stopped.
void serve(ChatService& service, const std::string& host, int port);

}  // namespace moelm

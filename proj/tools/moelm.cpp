#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "moelm/config.hpp"
#include "moelm/error.hpp"
#include "moelm/eval.hpp"
#include "moelm/pipeline.hpp"
#include "moelm/service.hpp"

namespace {

using namespace moelm;

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
  bool force = false;
};

RunConfig load(const Globals& g) {
  RunConfig cfg;
  if (!g.config.empty()) {
    cfg = load_config(g.config);
  } else {
    cfg.resolve(std::filesystem::current_path());
    cfg.validate();
  }
  if (g.seed) cfg.seed = *g.seed;
  return cfg;
}

Logger logger(const Globals& g) {
  if (g.quiet) return {};
  return [](const std::string& m) { std::cerr << m << '\n'; };
}

std::vector<std::string> client_context(const std::string& text) {
  std::vector<std::string> ctx{std::string(kClient)};
  for (auto& w : normalize(text)) ctx.push_back(std::move(w));
  ctx.emplace_back(kEoc);
  return ctx;
}

// Response text for trace: markers such as <pause> pass through whole, the
// rest is normalized; <EOR> is appended unless already last.
std::vector<std::string> response_tokens(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string piece; in >> piece;) {
    if (is_reserved_token(piece)) {
      out.push_back(piece);
    } else {
      for (auto& w : normalize(piece)) out.push_back(std::move(w));
    }
  }
  if (out.empty() || out.back() != kEor) out.emplace_back(kEor);
  return out;
}

std::vector<std::filesystem::path> model_files(const RunConfig& cfg) {
  const Artifacts a(cfg);
  return {a.kb, a.chat, a.qa, a.gate};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"moelm: mixture-of-experts dialogue LM (chat expert + KB question answering)"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("-c,--config", g.config, "Run configuration file");
  app.add_option("--seed", g.seed, "Override the configured seed");
  app.add_flag("-q,--quiet", g.quiet, "No progress output");

  auto* synth = app.add_subcommand("synth-corpus", "Generate the synthetic KB and dialogue splits");
  auto* genqa = app.add_subcommand("gen-qa-data", "Generate QA training data from the KB");
  auto* tchat = app.add_subcommand("train-chat", "Train the chat expert");
  auto* tqa = app.add_subcommand("train-qa", "Train the QA expert");
  auto* tgate = app.add_subcommand("train-gate", "Train the gate with both experts frozen");
  auto* eval = app.add_subcommand("eval", "Perplexity of chat-only vs integrated model");
  std::string filter;
  eval->add_option("--filter", filter, "all, value or manifest; prints one report pair");
  auto* tr = app.add_subcommand("trace", "Per-token alpha, p_c, p_qa for one client message");
  std::string message, response;
  tr->add_option("-m,--message", message, "Client message")->required();
  tr->add_option("-r,--response", response, "Response to trace (default: decode one)");
  auto* chat = app.add_subcommand("chat", "Interactive chat on stdin");
  auto* srv = app.add_subcommand("serve", "HTTP JSON service");
  std::string host = "127.0.0.1";
  int port = 8080;
  srv->add_option("--host", host, "Bind address");
  srv->add_option("--port", port, "Port");
  for (auto* sub : {eval, tr, chat, srv}) {
    sub->add_flag("--force", g.force, "Load a gate even if its expert hashes differ");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return 2;
  }

  try {
    const RunConfig cfg = load(g);
    const auto log = logger(g);
    if (*synth) {
      run_synth(cfg, log);
    } else if (*genqa) {
      run_gen_qa(cfg, log);
    } else if (*tchat) {
      run_train_chat(cfg, log);
    } else if (*tqa) {
      run_train_qa(cfg, log);
    } else if (*tgate) {
      run_train_gate(cfg, log);
    } else if (*eval) {
      if (filter.empty()) {
        std::cout << run_eval(cfg, log, g.force).dump(2) << '\n';
      } else {
        std::cout << run_eval_filter(cfg, parse_filter(filter), log, g.force).dump(2) << '\n';
        write_record(cfg, "eval-" + filter, model_files(cfg), {});
      }
    } else if (*tr) {
      const auto models = load_models(cfg, g.force);
      const auto ctx = client_context(message);
      std::vector<std::string> words;
      if (response.empty()) {
        auto r = ucs_decode(*models.integrated, ctx, cfg.decode);
        for (auto t : r.tokens) words.push_back(models.integrated->word(t));
      } else {
        words = response_tokens(response);
      }
      std::cout << trace_to_json(trace(*models.integrated, ctx, words)).dump(2) << '\n';
      write_record(cfg, "trace", model_files(cfg), {});
    } else if (*chat) {
      const auto models = load_models(cfg, g.force);
      write_record(cfg, "chat", model_files(cfg), {});
      ChatService service(*models.integrated, cfg.decode, cfg.seed);
      const auto id = service.create_session();
      std::string line;
      std::cerr << "> ";
      while (std::getline(std::cin, line)) {
        if (!normalize(line).empty()) {
          for (const auto& s : service.post_message(id, line).segments) std::cout << "agent: " << s << '\n';
        }
        std::cerr << "> ";
      }
    } else if (*srv) {
      const auto models = load_models(cfg, g.force);
      write_record(cfg, "serve", model_files(cfg), {});
      ChatService service(*models.integrated, cfg.decode, cfg.seed);
      if (log) log("listening on " + host + ":" + std::to_string(port));
      serve(service, host, port);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

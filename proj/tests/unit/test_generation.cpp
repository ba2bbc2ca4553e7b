#include "doctest.h"

#include <httplib.h>

#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include "support/oracles.hpp"
#include "taxoria/error.hpp"
#include "taxoria/generation.hpp"

using namespace taxoria;
namespace tt = taxoria::testing;

namespace {

std::string read(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::Io;
}

const std::vector<std::string> kStorePath{"Thing", "Organization", "LocalBusiness", "Store"};

/// Local stand-in for the inference server.
struct FakeServer {
  httplib::Server server;
  std::thread thread;
  int port = 0;
  explicit FakeServer(std::function<void(httplib::Server&)> routes) {
    routes(server);
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~FakeServer() {
    server.stop();
    thread.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port); }
};

}  // namespace

TEST_CASE("build_prompt") {
  auto p = build_prompt("OnlineStore", kStorePath);
  CHECK(p.find("OnlineStore") != std::string::npos);
  CHECK(p.find("Thing > Organization > LocalBusiness > Store > OnlineStore") != std::string::npos);
  CHECK(p.find("\"children\"") != std::string::npos);

  std::vector<std::string> root{"Thing"};
  auto single = build_prompt("Thing", root);
  CHECK(single.find("current class: Thing\n") != std::string::npos);
  CHECK(single.find(" > ") == std::string::npos);

  // Path may already end with the node.
  auto with_node = kStorePath;
  with_node.push_back("OnlineStore");
  CHECK(build_prompt("OnlineStore", with_node) == p);

  CHECK(build_prompt("OnlineStore", kStorePath) == read(std::string(TAXORIA_TEST_DATA) + "/golden_prompt_onlinestore.txt"));
  CHECK(build_prompt("X", root, "{{node}}|{{path}}|{{node}}") == "X|Thing > X|X");
}

TEST_CASE("prompt template loading") {
  tt::TempDir dir("tmpl");
  auto good = dir.path() / "good.txt";
  std::ofstream(good) << "children of {{node}} under {{path}}";
  CHECK(load_prompt_template(good) == "children of {{node}} under {{path}}");
  auto bad = dir.path() / "bad.txt";
  std::ofstream(bad) << "no placeholder";
  CHECK(code_of([&] { load_prompt_template(bad); }) == ErrorCode::FormatError);
  CHECK(code_of([&] { load_prompt_template(dir.path() / "missing.txt"); }) == ErrorCode::FileNotFound);
}

TEST_CASE("parse_children_json: worked examples") {
  CHECK(parse_children_json(R"({"children":["A","B","C"]})") == std::vector<std::string>{"A", "B", "C"});
  CHECK(parse_children_json("Here you go:\n```json\n{\"children\":[\"A\",\"a\",\"B\"]}\n```") ==
        std::vector<std::string>{"A", "B"});
  CHECK(code_of([] { parse_children_json("no json at all"); }) == ErrorCode::UnparseableResponse);
  CHECK(code_of([] { parse_children_json(""); }) == ErrorCode::UnparseableResponse);
  CHECK(parse_children_json(R"({"children":[]})").empty());
  CHECK(parse_children_json(R"({"children":["  Padded  ", "", 3, "padded"]})") == std::vector<std::string>{"Padded"});
}

TEST_CASE("parse_children_json: each ladder rung") {
  auto strict = parse_children(R"({"children": ["Bakery", "Cafe"]})");
  CHECK(strict.rung == ParseRung::Strict);
  CHECK(strict.names == std::vector<std::string>{"Bakery", "Cafe"});

  auto fenced = parse_children("Sure, format is {like this}.\n```json\n{\"children\": [\"Bakery\"]}\n```\nDone.");
  CHECK(fenced.rung == ParseRung::Fenced);
  CHECK(fenced.names == std::vector<std::string>{"Bakery"});

  auto embedded = parse_children("Sure! {\"note\": 1} then {\"children\": [\"Bakery\", \"Deli\"]} enjoy");
  CHECK(embedded.rung == ParseRung::Embedded);
  CHECK(embedded.names == std::vector<std::string>{"Bakery", "Deli"});

  auto lenient = parse_children("{\"Children\": [\"Bakery\", \"Deli\", \"Gro");
  CHECK(lenient.rung == ParseRung::Lenient);
  CHECK(lenient.names == std::vector<std::string>{"Bakery", "Deli"});

  auto escaped = parse_children("children: [\"Say \\\"hi\\\"\"");
  CHECK(escaped.rung == ParseRung::Lenient);
  CHECK(escaped.names == std::vector<std::string>{"Say \"hi\""});
}

TEST_CASE("parse_children_json: fuzzed responses never crash") {
  const std::vector<std::string> seeds = {
      R"({"children":["E-commerce Store","Subscription-based Store","Dropshipping Store"]})",
      "```json\n{\"children\": [\"A\", \"B\", \"C\"]}\n```",
      "Here are some: {\"children\": [\"Alpha\", \"Beta\"]} thanks",
      "children: [\"x\", \"y\"",
      R"({"children":[{"name":"nested"}, "ok", null, 1.5, ["deep"]]})",
  };
  const std::string alphabet = "{}[]\":,`\\\n abc\x01\xff";
  std::mt19937 rng(99);
  std::size_t parsed = 0, rejected = 0;
  for (int i = 0; i < 12000; ++i) {
    std::string s = seeds[rng() % seeds.size()];
    int edits = 1 + rng() % 6;
    for (int e = 0; e < edits && !s.empty(); ++e) {
      std::size_t pos = rng() % (s.size() + 1);
      switch (rng() % 4) {
        case 0: s.insert(s.begin() + static_cast<long>(pos), alphabet[rng() % alphabet.size()]); break;
        case 1: if (pos < s.size()) s.erase(pos, 1); break;
        case 2: if (pos < s.size()) s[pos] = alphabet[rng() % alphabet.size()]; break;
        default: s.resize(pos); break;
      }
    }
    try {
      auto names = parse_children_json(s);
      for (const auto& n : names) {
        CHECK_FALSE(n.empty());
        CHECK(n == trim(n));
      }
      ++parsed;
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::UnparseableResponse);
      ++rejected;
    }
  }
  CHECK(parsed + rejected == 12000);
  CHECK(parsed > 0);
  CHECK(rejected > 0);
}

TEST_CASE("generate_children") {
  GenerationOptions opts{"llama3"};

  tt::ScriptedLlm three([](const std::string&, const std::string&) {
    return std::string(R"({"children":["E-commerce Store","Subscription-based Store","Dropshipping Store"]})");
  });
  auto batch = generate_children(three, opts, "OnlineStore", kStorePath);
  CHECK(batch.candidates == std::vector<std::string>{"E-commerce Store", "Subscription-based Store", "Dropshipping Store"});
  CHECK(batch.parent_path.back() == "OnlineStore");
  CHECK(batch.parent_depth == 4);
  CHECK(batch.model_id == "llama3");
  CHECK(batch.attempts == 1);

  tt::ScriptedLlm empty([](const std::string&, const std::string&) { return std::string(R"({"children":[]})"); });
  CHECK(code_of([&] { generate_children(empty, opts, "OnlineStore", kStorePath); }) == ErrorCode::EmptyBatch);

  tt::ScriptedLlm five([](const std::string&, const std::string&) { return tt::children_json({"A", "B", "C", "D", "E"}); });
  auto capped = generate_children(five, opts, "OnlineStore", kStorePath);
  CHECK(capped.candidates == std::vector<std::string>{"A", "B", "C"});
}

TEST_CASE("generate_children: retries with a corrective prompt") {
  GenerationOptions opts{"m"};
  opts.max_retries = 2;
  std::vector<std::string> prompts;
  std::mutex mu;
  tt::ScriptedLlm flaky([&](const std::string&, const std::string& prompt) {
    std::lock_guard lock(mu);
    prompts.push_back(prompt);
    return prompts.size() < 3 ? std::string("garbage") : tt::children_json({"X"});
  });
  auto batch = generate_children(flaky, opts, "Thing", std::vector<std::string>{"Thing"});
  CHECK(batch.attempts == 3);
  CHECK(batch.candidates == std::vector<std::string>{"X"});
  REQUIRE(prompts.size() == 3);
  CHECK(prompts[1].size() > prompts[0].size());
  CHECK(prompts[1].rfind(prompts[0], 0) == 0);

  tt::ScriptedLlm never([](const std::string&, const std::string&) { return std::string("nope"); });
  CHECK(code_of([&] { generate_children(never, opts, "Thing", std::vector<std::string>{"Thing"}); }) ==
        ErrorCode::UnparseableResponse);
  CHECK(never.calls() == 3);
}

TEST_CASE("replay and recording clients") {
  tt::TempDir dir("replay");
  CHECK(code_of([&] { ReplayLlmClient(dir.path() / "missing"); }) == ErrorCode::FileNotFound);

  auto inner = std::make_shared<tt::ScriptedLlm>([](const std::string& node, const std::string&) {
    return tt::children_json({node + " A"});
  });
  RecordingLlmClient rec(inner, dir.path());
  auto prompt = build_prompt("Thing", std::vector<std::string>{"Thing"});
  auto live = rec.complete("m", prompt);
  rec.list_models();

  CHECK(std::filesystem::exists(dir.path() / replay_key(prompt)));
  CHECK(replay_key(prompt).size() == 64 + 4);

  ReplayLlmClient replay(dir.path());
  CHECK(replay.complete("any-model", prompt) == live);
  CHECK(replay.list_models() == std::vector<std::string>{"llama3", "llama3.2", "mistral"});
  CHECK(code_of([&] { replay.complete("m", prompt + "x"); }) == ErrorCode::LlmUnreachable);

  // sha256("") as a sanity anchor for the key function.
  CHECK(replay_key("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855.txt");
}

TEST_CASE("http client against a fake inference server") {
  std::mutex mu;
  nlohmann::json last_body;
  FakeServer fake([&](httplib::Server& s) {
    s.Get("/api/tags", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(R"({"models":[{"name":"llama3"},{"name":"llama3.2"},{"name":"mistral"}]})", "application/json");
    });
    s.Post("/api/generate", [&](const httplib::Request& req, httplib::Response& res) {
      std::lock_guard lock(mu);
      last_body = nlohmann::json::parse(req.body);
      res.set_content(R"({"model":"llama3","response":"{\"children\":[\"A\"]}","done":true})", "application/json");
    });
  });
  HttpLlmClient client({fake.url(), std::chrono::milliseconds(5000), 0, 0.0});
  CHECK(list_models(client) == std::vector<std::string>{"llama3", "llama3.2", "mistral"});
  CHECK(client.complete("llama3", "hello") == R"({"children":["A"]})");
  std::lock_guard lock(mu);
  CHECK(last_body["model"] == "llama3");
  CHECK(last_body["prompt"] == "hello");
  CHECK(last_body["stream"] == false);
  CHECK(last_body["format"] == "json");
}

TEST_CASE("http client: empty and unreachable servers") {
  FakeServer empty([](httplib::Server& s) {
    s.Get("/api/tags", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(R"({"models":[]})", "application/json");
    });
  });
  HttpLlmClient client({empty.url(), std::chrono::milliseconds(5000), 0, 0.0});
  CHECK(list_models(client).empty());

  // Grab a free port, then release it so nothing listens there.
  int dead_port = 0;
  {
    httplib::Server probe;
    dead_port = probe.bind_to_any_port("127.0.0.1");
  }
  HttpLlmClient dead({"http://127.0.0.1:" + std::to_string(dead_port), std::chrono::milliseconds(500), 1, 0.0});
  CHECK(code_of([&] { dead.list_models(); }) == ErrorCode::LlmUnreachable);
  CHECK(code_of([&] { dead.complete("m", "p"); }) == ErrorCode::LlmUnreachable);
}

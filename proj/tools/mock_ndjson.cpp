// Stand-in NDJSON peer for tests of the external detector and polisher.
//
//   mock_ndjson detector [--rule keyword|const:X] [--mode ok|sleep|garbage|wrong-id|die] [--log FILE]
//   mock_ndjson polisher [--mode ...] [--log FILE]
//
// keyword: 0.9 when the text contains a machine-register connector, else 0.1.
#include <chrono>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>

#include <nlohmann/json.hpp>

namespace {

bool has_connector(const std::string& text) {
  std::string lower;
  for (char ch : text) {
    lower += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  }
  for (const char* w : {"moreover", "furthermore", "in conclusion", "additionally", "consequently"}) {
    if (lower.find(w) != std::string::npos) {
      return true;
    }
  }
  return false;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: mock_ndjson detector|polisher [--rule R] [--mode M] [--log FILE]\n";
    return 2;
  }
  const std::string role = argv[1];
  std::string rule = "keyword";
  std::string mode = "ok";
  std::string log_path;
  for (int i = 2; i + 1 < argc; i += 2) {
    const std::string flag = argv[i];
    if (flag == "--rule") {
      rule = argv[i + 1];
    } else if (flag == "--mode") {
      mode = argv[i + 1];
    } else if (flag == "--log") {
      log_path = argv[i + 1];
    }
  }
  std::ofstream log;
  if (!log_path.empty()) {
    log.open(log_path, std::ios::app);
  }
  std::string line;
  while (std::getline(std::cin, line)) {
    if (log.is_open()) {
      log << line << '\n';
      log.flush();
    }
    if (mode == "die") {
      return 1;
    }
    if (mode == "sleep") {
      std::this_thread::sleep_for(std::chrono::seconds(30));
    }
    if (mode == "garbage") {
      std::cout << "this is not json\n" << std::flush;
      continue;
    }
    const auto req = nlohmann::json::parse(line);
    nlohmann::json resp;
    resp["id"] = mode == "wrong-id" ? nlohmann::json("nope") : req.at("id");
    if (role == "detector") {
      const auto text = req.at("text").get<std::string>();
      resp["score"] = rule.rfind("const:", 0) == 0 ? std::stod(rule.substr(6)) : (has_connector(text) ? 0.9 : 0.1);
    } else {
      auto s = req.at("sentence").get<std::string>();
      const auto comma = s.find(", ");
      auto candidates = nlohmann::json::array();
      if (has_connector(s) && comma != std::string::npos) {
        auto rest = s.substr(comma + 2);
        if (!rest.empty()) {
          rest[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(rest[0])));
        }
        candidates.push_back(rest);
      }
      candidates.push_back(s);
      resp["candidates"] = candidates;
    }
    std::cout << resp.dump() << '\n' << std::flush;
  }
  return 0;
}

#include "fake_chat_server.hpp"

#include <httplib.h>

namespace govq::testing {

struct FakeChatServer::Impl {
  httplib::Server server;
  std::thread thread;
  int port = 0;
  mutable std::mutex mu;
  std::deque<Reply> script;
  std::vector<nlohmann::json> received;
  std::string authorization;
};

FakeChatServer::FakeChatServer() : impl_(std::make_unique<Impl>()) {
  Impl* impl = impl_.get();
  impl->server.Post("/v1/chat/completions", [impl](const httplib::Request& req, httplib::Response& res) {
    Reply reply{500, "script exhausted"};
    {
      std::lock_guard lock(impl->mu);
      impl->received.push_back(nlohmann::json::parse(req.body, nullptr, false));
      impl->authorization = req.get_header_value("Authorization");
      if (!impl->script.empty()) {
        reply = impl->script.front();
        impl->script.pop_front();
      }
    }
    res.status = reply.status;
    if (reply.status != 200) {
      res.set_content(reply.content, "text/plain");
      return;
    }
    nlohmann::json body = {{"choices", {{{"index", 0}, {"message", {{"role", "assistant"}, {"content", reply.content}}}}}}};
    res.set_content(body.dump(), "application/json");
  });
  impl->port = impl->server.bind_to_any_port("127.0.0.1");
  impl->thread = std::thread([impl] { impl->server.listen_after_bind(); });
  impl->server.wait_until_ready();
}

FakeChatServer::~FakeChatServer() {
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

void FakeChatServer::push(Reply r) {
  std::lock_guard lock(impl_->mu);
  impl_->script.push_back(std::move(r));
}

std::string FakeChatServer::url() const {
  return "http://127.0.0.1:" + std::to_string(impl_->port) + "/v1/chat/completions";
}

std::vector<nlohmann::json> FakeChatServer::received() const {
  std::lock_guard lock(impl_->mu);
  return impl_->received;
}

std::string FakeChatServer::last_authorization() const {
  std::lock_guard lock(impl_->mu);
  return impl_->authorization;
}

}  // namespace govq::testing

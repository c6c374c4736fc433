// Copyright 2026 The wugflow Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


// JSON-over-HTTP annotation service. Handlers are plain methods returning a
// status code and body, so they can be exercised without a socket; Mount()
// wires them onto an httplib server.
//
//   GET  /projects/{p}/tasks/next?annotator=a     annotator token
//   POST /projects/{p}/judgments                  annotator token
//   POST /projects/{p}/rounds/advance             admin token
//   GET  /projects/{p}/lemmas/{l}/graph           admin token
//   GET  /projects/{p}/stats                      admin token
//
// Tokens travel as "Authorization: Bearer <token>".

#ifndef WUG_SERVICE_H_
#define WUG_SERVICE_H_

#include <functional>
#include <map>
#include <memory>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "wug/storage.h"

namespace httplib {
class Server;
}

namespace wug {

struct HttpResponse {
  int status = 200;
  std::string body;  // JSON
};

// One assignment as served to an annotator.
struct PairTask {
  std::string task_id;
  std::string lemma;
  NodePair pair;
  std::string annotator;
  bool swapped = false;  // present pair.second first
};

class AnnotationService {
 public:
  AnnotationService();
  AnnotationService(const AnnotationService&) = delete;
  AnnotationService& operator=(const AnnotationService&) = delete;
  ~AnnotationService();

  absl::Status AddProject(std::unique_ptr<ProjectStore> store);

  HttpResponse NextTask(std::string_view project, std::string_view annotator,
                        std::string_view token);
  // Body: {"task_id": ..., "score": 0..4, "comment": optional}.
  HttpResponse SubmitJudgment(std::string_view project, std::string_view token,
                              std::string_view body);
  // Body (optional): {"expected_round": r, "expire_open": bool}.
  HttpResponse AdvanceRound(std::string_view project, std::string_view token,
                            std::string_view body);
  HttpResponse Graph(std::string_view project, std::string_view lemma,
                     std::string_view token);
  HttpResponse Stats(std::string_view project, std::string_view token);

  // Tests only: called at named stages of AdvanceRound ("computed", then the
  // store's "batch_written"); a non-OK status aborts the advance.
  void set_fault_hook(std::function<absl::Status(std::string_view)> hook) {
    fault_hook_ = std::move(hook);
  }

  void Mount(httplib::Server& server);

 private:
  struct Project;
  Project* Find(std::string_view id);

  std::map<std::string, std::unique_ptr<Project>, std::less<>> projects_;
  std::function<absl::Status(std::string_view)> fault_hook_;
};

// Labels of the 0..4 relatedness scale, highest first, 0 last.
const std::vector<std::pair<int, std::string>>& ScaleLabels();

}  // namespace wug

#endif  // WUG_SERVICE_H_

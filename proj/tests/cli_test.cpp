// Copyright 2026 The motion2music Authors. All Rights Reserved.
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


#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "m2m/cli.hpp"
#include "m2m/config.hpp"
#include "support.hpp"

namespace m2m {
namespace {

int cli(std::vector<std::string> args, std::string* err_text = nullptr) {
  args.insert(args.begin(), "m2m");
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  if (err_text) *err_text = err.str();
  return code;
}

class CliTest : public ::testing::Test {
 protected:
  std::string path(const std::string& rel) const { return (dir_.path() / rel).string(); }
  testing::ScratchDir dir_{"cli"};
};

TEST_F(CliTest, HelpAndParseErrors) {
  EXPECT_EQ(cli({"--help"}), 0);
  EXPECT_EQ(cli({}), kExitConfig);
  EXPECT_EQ(cli({"train", "--bogus-flag"}), kExitConfig);
}

TEST_F(CliTest, ToyDataWritesManifestAndEchoesConfig) {
  ASSERT_EQ(cli({"make-toy-data", "--clips", "8", "--out", path("data")}), 0);
  EXPECT_TRUE(std::filesystem::exists(path("data/manifests/toy.json")));
  const KeyValues echo = load_key_values(path("data/config.cfg"));
  EXPECT_EQ(echo.at("clips"), "8");
  EXPECT_EQ(echo.at("genres"), "2");
}

TEST_F(CliTest, ConfigPrecedenceFileThenSetThenShortcut) {
  std::ofstream(path("toy.cfg")) << "clips = 20\nseed = 4\n";
  ASSERT_EQ(cli({"make-toy-data", "--config", path("toy.cfg"), "--set", "clips=12", "--set",
                 "genres=3", "--clips", "6", "--out", path("data")}),
            0);
  const KeyValues echo = load_key_values(path("data/config.cfg"));
  EXPECT_EQ(echo.at("clips"), "6");
  EXPECT_EQ(echo.at("genres"), "3");
  EXPECT_EQ(echo.at("seed"), "4");
}

TEST_F(CliTest, ExitCodesFollowErrorKinds) {
  std::string err;
  EXPECT_EQ(cli({"make-toy-data", "--set", "colour=red", "--out", path("x")}, &err), kExitConfig);
  EXPECT_NE(err.find("colour"), std::string::npos);
  EXPECT_EQ(cli({"make-toy-data", "--set", "genres=9", "--out", path("x")}), kExitConfig);
  EXPECT_EQ(cli({"train", "--manifest", path("missing.json"), "--codec", path("missing.m2a"),
                 "--out", path("t")}),
            kExitData);
  EXPECT_EQ(cli({"denoise", "--input", path("missing.wav"), "--out", path("d")}), kExitData);
  EXPECT_EQ(cli({"evaluate", "--checkpoint", path("missing.m2a"), "--out", path("e")}), kExitData);
}

TEST_F(CliTest, DenoiseWritesSameLengthFile) {
  save_wav(testing::sine(440.0, 1.0), path("tone.wav"));
  ASSERT_EQ(cli({"denoise", "--input", path("tone.wav"), "--out", path("dn")}), 0);
  EXPECT_EQ(load_wav(path("dn/tone_denoised.wav")).size(), 22050u);
}

TEST_F(CliTest, BinaryReportsExitStatus) {
  const std::string cmd = std::string(M2M_CLI_PATH) + " make-toy-data --set genres=1 --out " +
                          path("bin") + " 2>/dev/null";
  const int status = std::system(cmd.c_str());
  ASSERT_TRUE(WIFEXITED(status));
  EXPECT_EQ(WEXITSTATUS(status), kExitConfig);
  const std::string help = std::string(M2M_CLI_PATH) + " --help >/dev/null";
  EXPECT_EQ(WEXITSTATUS(std::system(help.c_str())), 0);
}

}  // namespace
}  // namespace m2m

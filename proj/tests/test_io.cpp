/*
 * Copyright (c) 2026, The sevit authors. All rights reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <gtest/gtest.h>

#include <chrono>
#include <csignal>
#include <fstream>
#include <string>
#include <sys/wait.h>
#include <thread>
#include <unistd.h>

#include "sevit/error.hpp"
#include "sevit/io.hpp"
#include "test_support.hpp"

namespace {

using namespace sevit;
using sevit::testing::TempDir;

TEST(Binary, RoundTrip) {
  io::BinaryWriter w;
  w.put_u32(0xdeadbeef);
  w.put_u64(1ULL << 40);
  w.put_f64(-3.25);
  w.put_string("video_7");
  io::BinaryReader r(w.bytes(), "roundtrip");
  EXPECT_EQ(r.u32(), 0xdeadbeefu);
  EXPECT_EQ(r.u64(), 1ULL << 40);
  EXPECT_EQ(r.f64(), -3.25);
  EXPECT_EQ(r.string(), "video_7");
  EXPECT_TRUE(r.at_end());
}

TEST(Binary, LittleEndian) {
  io::BinaryWriter w;
  w.put_u32(0x01020304);
  EXPECT_EQ(w.bytes(), std::string("\x04\x03\x02\x01", 4));
}

TEST(Binary, OverrunNamesContext) {
  io::BinaryReader r(std::string_view("\x01\x02", 2), "tiny.bin");
  try {
    (void)r.u32();
    FAIL() << "expected LoadError";
  } catch (const LoadError& e) {
    EXPECT_NE(std::string(e.what()).find("tiny.bin"), std::string::npos);
  }
}

TEST(Files, MissingFileIsNotFound) {
  EXPECT_THROW((void)io::read_file("/nonexistent/sevit/file"), NotFoundError);
}

TEST(Files, AtomicWriteReplacesContents) {
  TempDir dir;
  const auto target = dir / "out.bin";
  io::atomic_write(target, "first");
  EXPECT_EQ(io::read_file(target), "first");
  io::atomic_write(target, "second version");
  EXPECT_EQ(io::read_file(target), "second version");
  for (const auto& entry : std::filesystem::directory_iterator(dir.path())) {
    EXPECT_EQ(entry.path().filename(), "out.bin");
  }
}

TEST(Files, FailedWriterLeavesOldFile) {
  TempDir dir;
  const auto target = dir / "out.txt";
  io::atomic_write(target, "old");
  EXPECT_THROW(io::atomic_write_with(target,
                                     [](std::ostream& os) {
                                       os << "partial";
                                       throw std::runtime_error("writer failed");
                                     }),
               std::runtime_error);
  EXPECT_EQ(io::read_file(target), "old");
}

// A process killed in the middle of writing must leave either the old
// contents or nothing, never a truncated file.
TEST(Files, KillDuringWriteNeverExposesPartialFile) {
  TempDir dir;
  const auto target = dir / "metrics.jsonl";
  io::atomic_write(target, "old contents\n");
  const pid_t pid = ::fork();
  ASSERT_GE(pid, 0);
  if (pid == 0) {
    io::atomic_write_with(target, [](std::ostream& os) {
      for (int i = 0; i < 1000000; ++i) {
        os << "line " << i << '\n';
        if (i % 1000 == 0) {
          os.flush();
          std::this_thread::sleep_for(std::chrono::milliseconds(1));
        }
      }
    });
    ::_exit(0);
  }
  std::this_thread::sleep_for(std::chrono::milliseconds(50));
  ::kill(pid, SIGKILL);
  int status = 0;
  ::waitpid(pid, &status, 0);
  ASSERT_TRUE(WIFSIGNALED(status));
  EXPECT_EQ(io::read_file(target), "old contents\n");
}

}  // namespace

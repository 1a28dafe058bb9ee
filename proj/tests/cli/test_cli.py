#!/usr/bin/env python3
# Copyright 2026 The stepgate Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""End-to-end checks of the stepgate command line."""

import argparse
import csv
import io
import json
import subprocess
import sys
import tempfile
import unittest
from pathlib import Path

BINARY = None
DATA = None


def run(*args, cwd=None):
    return subprocess.run([BINARY, *args], capture_output=True, text=True, cwd=cwd, timeout=120)


def read_csv(path):
    lines = [l for l in Path(path).read_text().splitlines() if not l.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(lines))))


class CliTest(unittest.TestCase):
    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)
        self.corpus = str(Path(DATA) / "mini_corpus.jsonl")
        self.expected = json.loads((Path(DATA) / "mini_corpus_expected.json").read_text())

    def tearDown(self):
        self._tmp.cleanup()

    def test_delta_out_of_range(self):
        p = run("replay", "--corpus", self.corpus, "--delta", "1.5", "--out", str(self.tmp / "o"))
        self.assertEqual(p.returncode, 2, p.stderr)
        self.assertIn("(0, 1)", p.stderr)

    def test_unknown_flag(self):
        p = run("replay", "--corpus", self.corpus, "--no-such-flag")
        self.assertEqual(p.returncode, 2)

    def test_missing_corpus_file(self):
        p = run("validate", "--corpus", str(self.tmp / "absent.jsonl"))
        self.assertNotEqual(p.returncode, 0)
        self.assertTrue(p.stderr.strip())

    def test_replay_matches_oracle(self):
        out = self.tmp / "replay"
        p = run("replay", "--corpus", self.corpus, "--policy", "traces", "--delta", "0.5",
                "--window", "5", "--out", str(out))
        self.assertEqual(p.returncode, 0, p.stderr)
        for name in ("table.csv", "pareto.csv", "records.csv", "runs.json"):
            self.assertTrue((out / name).exists(), name)
        rows = [r for r in read_csv(out / "records.csv") if r["config"].startswith("traces")]
        by_id = {r["id"]: r for r in rows}
        for e in self.expected["records"]:
            r = by_id[e["id"]]
            self.assertEqual(r["stopped_early"] == "true", e["stopped_early"], e["id"])
            self.assertEqual(r["stop_step"], "" if e["stop_step"] is None else str(e["stop_step"]), e["id"])
            self.assertEqual(int(r["tokens_main"]), e["tokens_main"], e["id"])
            self.assertEqual(int(r["tokens_exit"]), e["tokens_exit"], e["id"])
            self.assertEqual(r["correct"] == "true", e["correct"], e["id"])

    def test_rerun_is_byte_identical(self):
        outputs = []
        for name in ("a", "b"):
            out = self.tmp / name
            p = run("replay", "--corpus", self.corpus, "--delta", "0.5,0.7", "--jobs", "2",
                    "--out", str(out))
            self.assertEqual(p.returncode, 0, p.stderr)
            outputs.append({f.name: f.read_bytes() for f in out.iterdir() if f.name != "run.log"})
        self.assertEqual(outputs[0], outputs[1])

    def test_ies(self):
        out = self.tmp / "ies"
        p = run("ies", "--corpus", self.corpus, "--out", str(out))
        self.assertEqual(p.returncode, 0, p.stderr)
        never = sum(1 for e in self.expected["records"] if e["never_correct"])
        self.assertIn("never_correct=%d" % never, p.stdout)
        rows = {r["id"]: r for r in read_csv(out / "ies.csv")}
        for e in self.expected["records"]:
            self.assertEqual(int(rows[e["id"]]["s_ies"]), e["ies_step"], e["id"])
            self.assertEqual(rows[e["id"]]["never_correct"] == "true", e["never_correct"], e["id"])

    def test_validate(self):
        p = run("validate", "--corpus", self.corpus)
        self.assertEqual(p.returncode, 0, p.stderr)
        self.assertIn("valid records=12", p.stdout)
        bad = self.tmp / "bad.jsonl"
        bad.write_text('{"id": "x"}\n')
        p = run("validate", "--corpus", str(bad))
        self.assertEqual(p.returncode, 1)
        self.assertIn("bad.jsonl:1:", p.stderr)

    def test_kappa_against_reference(self):
        ratings = [["i1", "a", "a", "b"], ["i2", "b", "b", "b"], ["i3", "a", "b", "c"],
                   ["i4", "c", "c", "c"], ["i5", "a", "a", "a"]]
        path = self.tmp / "ratings.csv"
        path.write_text("item,r1,r2,r3\n" + "\n".join(",".join(r) for r in ratings) + "\n")
        p = run("kappa", "--ratings", str(path))
        self.assertEqual(p.returncode, 0, p.stderr)
        got = float(p.stdout.split()[0].split("=")[1])
        try:
            from statsmodels.stats.inter_rater import aggregate_raters, fleiss_kappa
        except ImportError:
            self.skipTest("statsmodels not installed")
        table, _ = aggregate_raters([r[1:] for r in ratings])
        self.assertAlmostEqual(got, fleiss_kappa(table), places=9)


def main():
    global BINARY, DATA
    parser = argparse.ArgumentParser()
    parser.add_argument("--binary", required=True)
    parser.add_argument("--data-dir", required=True)
    args, rest = parser.parse_known_args()
    BINARY, DATA = args.binary, args.data_dir
    unittest.main(argv=[sys.argv[0], *rest], verbosity=2)


if __name__ == "__main__":
    main()

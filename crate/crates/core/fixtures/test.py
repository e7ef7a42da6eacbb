#!/usr/bin/env python3
# Toy test runner for fixture projects.
#
# Reads .harness/tests.txt: one test per line, tab-separated
#   test_id  file  pattern  [line]
# A test passes when the file matches the regular expression (a leading `!`
# inverts it). Failures print a trace mixing framework and project frames.
import os
import re
import sys


def main():
    root = sys.argv[1] if len(sys.argv) > 1 else "."
    spec = os.path.join(root, ".harness", "tests.txt")
    tests = []
    if os.path.exists(spec):
        with open(spec, encoding="utf-8") as fh:
            for raw in fh:
                raw = raw.rstrip("\n")
                if raw.strip() and not raw.startswith("#"):
                    tests.append(raw.split("\t"))
    print("Ran %d tests" % len(tests))
    failures = 0
    for parts in tests:
        test_id, rel, pattern = parts[0], parts[1], parts[2]
        line = parts[3] if len(parts) > 3 else "1"
        negate = pattern.startswith("!")
        if negate:
            pattern = pattern[1:]
        try:
            with open(os.path.join(root, rel), encoding="utf-8", errors="replace") as fh:
                found = re.search(pattern, fh.read(), re.MULTILINE) is not None
        except OSError:
            found = False
        if found != negate:
            continue
        failures += 1
        cls, _, method = test_id.rpartition(".")
        expectation = "not to match" if negate else "to match"
        print("FAIL: %s - expected %s %s /%s/" % (test_id, rel, expectation, pattern))
        print("    at org.junit.Assert.fail(Assert.java:89)")
        print("    at %s.%s(%s:%s)" % (cls or test_id, method or "run", os.path.basename(rel), line))
        print("    at /usr/lib/jvm/junit-runner/org/junit/runners/ParentRunner.java:331")
    if failures:
        print("FAILED (failures=%d)" % failures)
        return 1
    print("OK")
    return 0


if __name__ == "__main__":
    sys.exit(main())

#!/usr/bin/env python3
# Toy "compiler" for fixture projects.
#
# Checks every .java file for brace balance, field accesses that hit a
# private field of another class, and get/set/is calls that resolve to no
# declared or @Getter/@Setter-generated method. Errors go to stderr as
# `path:line: error: message`; progress chatter goes to stdout.
import os
import re
import sys

MODIFIERS = r"(?:(?:public|protected|private|static|final|abstract|synchronized|native|transient|volatile)\s+)*"
FIELD = re.compile(r"^\s*(?:@\w+(?:\([^)]*\))?\s+)*(" + MODIFIERS + r")([\w<>\[\],.?]+)\s+(\w+)\s*(?:=[^;]*)?;")
METHOD = re.compile(r"^\s*(?:@\w+(?:\([^)]*\))?\s+)*" + MODIFIERS + r"(?:<[^>]*>\s+)?([\w<>\[\],.?]+)\s+(\w+)\s*\(")
NOT_TYPES = {"return", "new", "throw", "else", "case"}
FIELD_ACCESS = re.compile(r"\.(\w+)\b(?!\s*\()")
ACCESSOR_CALL = re.compile(r"\.((?:get|set|is)[A-Z]\w*)\s*\(")
# Methods of the standard library and test framework the fixtures call.
LIBRARY_METHODS = {"getClass", "getMessage", "isEmpty", "isEqualTo", "isNotNull", "isNotEmpty", "isTrue", "isFalse"}


def java_files(root):
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames[:] = sorted(d for d in dirnames if not d.startswith("."))
        for name in sorted(filenames):
            if name.endswith(".java"):
                full = os.path.join(dirpath, name)
                yield os.path.relpath(full, root), full


def strip(line, in_block):
    """Blanks out comments and literals; returns (code, still_in_block)."""
    out = []
    i, n = 0, len(line)
    while i < n:
        if in_block:
            j = line.find("*/", i)
            if j < 0:
                return "".join(out), True
            i, in_block = j + 2, False
            continue
        if line.startswith("//", i):
            break
        if line.startswith("/*", i):
            in_block, i = True, i + 2
            continue
        c = line[i]
        if c in "\"'":
            i += 1
            while i < n and line[i] != c:
                i += 2 if line[i] == "\\" else 1
            out.append(c + c)
            i += 1
            continue
        out.append(c)
        i += 1
    return "".join(out), in_block


class Unit:
    def __init__(self, rel, text):
        self.rel = rel
        self.name = os.path.splitext(os.path.basename(rel))[0]
        self.code = []
        in_block = False
        for raw in text.split("\n"):
            code, in_block = strip(raw, in_block)
            self.code.append(code)
        self.private_fields = set()
        self.fields = set()
        self.methods = set()
        annotations = set(re.findall(r"@(\w+)", "\n".join(self.code)))
        for code in self.code:
            m = FIELD.match(code)
            if m and m.group(2) not in NOT_TYPES and "(" not in code.split("=")[0]:
                self.fields.add(m.group(3))
                if "private" in m.group(1).split():
                    self.private_fields.add(m.group(3))
            m = METHOD.match(code)
            if m and m.group(1) not in NOT_TYPES:
                self.methods.add(m.group(2))
        for field in self.fields:
            cap = field[:1].upper() + field[1:]
            if "Getter" in annotations:
                self.methods.update({"get" + cap, "is" + cap})
            if "Setter" in annotations:
                self.methods.add("set" + cap)


def brace_errors(unit):
    stack = []
    for number, code in enumerate(unit.code, start=1):
        for c in code:
            if c == "{":
                stack.append(number)
            elif c == "}":
                if not stack:
                    yield number, "unbalanced closing brace '}'"
                    return
                stack.pop()
    if stack:
        yield stack[-1], "unclosed brace '{'"


def main():
    root = sys.argv[1] if len(sys.argv) > 1 else "."
    units = []
    for rel, full in java_files(root):
        with open(full, encoding="utf-8", errors="replace") as fh:
            units.append(Unit(rel, fh.read()))
    print("[INFO] compiling %d source files" % len(units))
    public_fields = set()
    private_owner = {}
    methods = set()
    for u in units:
        public_fields |= u.fields - u.private_fields
        for f in u.private_fields:
            private_owner.setdefault(f, u.name)
        methods |= u.methods
    errors = []
    for u in units:
        errors.extend((u.rel, line, msg) for line, msg in brace_errors(u))
        for number, code in enumerate(u.code, start=1):
            if re.match(r"\s*(import|package)\b", code):
                continue
            for m in FIELD_ACCESS.finditer(code):
                name = m.group(1)
                owner = private_owner.get(name)
                if owner and owner != u.name and name not in public_fields and name not in u.fields:
                    errors.append((u.rel, number, "%s has private access in %s" % (name, owner)))
            for m in ACCESSOR_CALL.finditer(code):
                if m.group(1) not in methods and m.group(1) not in LIBRARY_METHODS:
                    errors.append((u.rel, number, "cannot find symbol: method %s()" % m.group(1)))
    for rel, line, msg in errors:
        sys.stderr.write("%s:%d: error: %s\n" % (rel, line, msg))
    if errors:
        print("[INFO] BUILD FAILURE")
        return 1
    print("[INFO] BUILD SUCCESS")
    return 0


if __name__ == "__main__":
    sys.exit(main())

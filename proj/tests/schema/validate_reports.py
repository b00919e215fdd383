#!/usr/bin/env python3
"""Validate harness JSON reports and the runtime event log against schemas/."""

import argparse
import json
import os
import subprocess
import sys
import tempfile

import jsonschema


def load_schema(directory, name):
    with open(os.path.join(directory, f"{name}.schema.json")) as f:
        schema = json.load(f)
    jsonschema.Draft202012Validator.check_schema(schema)
    return jsonschema.Draft202012Validator(schema)


def harness_json(harness, demo, args, ok_codes):
    cmd = [harness, "--demo-binary", demo, *args, "--json", "-"]
    proc = subprocess.run(cmd, capture_output=True, text=True, timeout=600)
    if proc.returncode not in ok_codes:
        raise SystemExit(f"{' '.join(cmd)} exited {proc.returncode}\n{proc.stderr}")
    return json.loads(proc.stdout)


def event_lines(demo):
    with tempfile.NamedTemporaryFile("w+", suffix=".log") as log:
        env = dict(os.environ, SELFDBG_EVENT_FD=str(log.fileno()))
        subprocess.run([demo, "run", "--inputs", "20", "--fragments", "3"], env=env, check=True,
                       stdout=subprocess.DEVNULL, pass_fds=(log.fileno(),), timeout=60)
        log.seek(0)
        return [json.loads(line) for line in log if line.strip()]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--harness", required=True)
    ap.add_argument("--demo", required=True)
    ap.add_argument("--schemas", required=True)
    opts = ap.parse_args()

    failures = 0

    def check(name, validator, instance):
        nonlocal failures
        errors = sorted(validator.iter_errors(instance), key=lambda e: list(e.path))
        for e in errors:
            print(f"{name}: {'/'.join(map(str, e.path))}: {e.message}")
        failures += len(errors)
        print(f"{name}: {'ok' if not errors else 'INVALID'}")

    check("attack", load_schema(opts.schemas, "attack"),
          harness_json(opts.harness, opts.demo, ["attack", "external-attach", "kill-app"], {0}))
    check("simulate", load_schema(opts.schemas, "simulate"),
          harness_json(opts.harness, opts.demo, ["simulate", "--all"], {0}))
    check("scan", load_schema(opts.schemas, "scan"),
          harness_json(opts.harness, opts.demo, ["scan", opts.demo], {0}))
    # Exit 1 only reports a failed derived check; the document is still complete.
    check("bench", load_schema(opts.schemas, "bench"),
          harness_json(opts.harness, opts.demo, ["bench", "--iterations", "100", "--init-runs", "30"], {0, 1}))

    events = event_lines(opts.demo)
    validator = load_schema(opts.schemas, "event")
    if not events:
        print("event: no lines logged")
        failures += 1
    for i, ev in enumerate(events):
        for e in validator.iter_errors(ev):
            print(f"event line {i + 1}: {e.message}")
            failures += 1
    print(f"event: {len(events)} lines {'ok' if failures == 0 else 'checked'}")

    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())

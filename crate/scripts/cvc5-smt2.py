#!/usr/bin/env python3
"""Run an SMT-LIB 2 script through the cvc5 Python bindings.

Reads the script from the file named on the command line, or from stdin, and
prints solver responses the way the cvc5 binary would.
"""
import sys

import cvc5


def main() -> int:
    text = open(sys.argv[1]).read() if len(sys.argv) > 1 else sys.stdin.read()
    tm = cvc5.TermManager()
    solver = cvc5.Solver(tm)
    solver.setOption("produce-models", "true")
    symbols = cvc5.SymbolManager(tm)
    parser = cvc5.InputParser(solver, symbols)
    parser.setStringInput(cvc5.InputLanguage.SMT_LIB_2_6, text, "input")
    while True:
        cmd = parser.nextCommand()
        if cmd.isNull():
            break
        out = cmd.invoke(solver, symbols)
        if out:
            print(out, end="", flush=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())

#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
BP(λ) v1.0
Online synthetic-gradient training for RNNs: experiments and numerical verification
"""

import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from bplambda.cli import main

if __name__ == "__main__":
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        print()
        print()
        print("⚠️  Interrupted by user")
        sys.exit(1)
    except Exception as e:
        print()
        print()
        print("=" * 80)
        print("❌ CRITICAL ERROR")
        print("=" * 80)
        print(f"Type: {type(e).__name__}")
        print(f"Message: {e}")
        print()
        import traceback
        traceback.print_exc()
        print()
        sys.exit(1)

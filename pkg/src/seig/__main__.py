# SPDX-FileCopyrightText: 2024 seig contributors
#
# SPDX-License-Identifier: Apache-2.0

"""Entry module for seig."""

import sys

if __name__ == "__main__":
    from ._main import main

    sys.exit(main())

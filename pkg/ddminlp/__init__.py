# SPDX-FileCopyrightText: 2024-present ddminlp contributors
#
# SPDX-License-Identifier: MIT
"""Global MINLP solver: spatial branch and bound with decision-diagram cuts."""

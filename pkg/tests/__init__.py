# SPDX-FileCopyrightText: 2023-present Kenneth Yang <kjy5@uw.edu>
#
# SPDX-License-Identifier: MIT

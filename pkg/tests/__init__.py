# Makes tests a Python package
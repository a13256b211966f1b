from setuptools import setup, find_packages

setup(
    name="oodkit",
    version="1.0.0",
    packages=find_packages(exclude=["examples", "examples.*"]),
    py_modules=["app"],
    install_requires=[
        "numpy==1.26.4",
        "scipy==1.11.4",
        "click==8.1.7",
        "python-dotenv==1.0.0",
        "Pillow==10.3.0",
    ],
    extras_require={
        "test": [
            "pytest==8.2.0",
            "hypothesis==6.100.1",
        ],
    },
    entry_points={
        "console_scripts": [
            "oodkit=app:main",
        ],
    },
)

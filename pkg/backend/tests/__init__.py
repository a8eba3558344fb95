"""测试模块"""
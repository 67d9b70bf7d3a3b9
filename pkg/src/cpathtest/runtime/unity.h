/*
 * Minimal Unity-compatible unit test runtime.
 *
 * Source-compatible with the commonly used subset of the Unity API
 * (TEST_ASSERT_* macros, UNITY_BEGIN/UNITY_END/RUN_TEST, setUp/tearDown)
 * and prints results in Unity's "file:line:test:STATUS" format.
 */
#ifndef UNITY_FRAMEWORK_H
#define UNITY_FRAMEWORK_H

#include <setjmp.h>
#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef void (*UnityTestFunction)(void);

void setUp(void);
void tearDown(void);

void UnityBegin(const char *filename);
int UnityEnd(void);
void UnityDefaultTestRun(UnityTestFunction func, const char *name, int line);

void UnityFail(const char *msg, int line);
void UnityIgnore(const char *msg, int line);
void UnityMessage(const char *msg, int line);
void UnityAssertBool(int condition, const char *what, const char *msg, int line);
void UnityAssertEqualInt(intmax_t expected, intmax_t actual, const char *msg, int line);
void UnityAssertEqualUInt(uintmax_t expected, uintmax_t actual, int hex, const char *msg, int line);
void UnityAssertNotEqualInt(intmax_t expected, intmax_t actual, const char *msg, int line);
void UnityAssertCompareInt(intmax_t threshold, intmax_t actual, int op, const char *msg, int line);
void UnityAssertCompareUInt(uintmax_t threshold, uintmax_t actual, int op, const char *msg, int line);
void UnityAssertEqualPtr(const void *expected, const void *actual, const char *msg, int line);
void UnityAssertEqualString(const char *expected, const char *actual, const char *msg, int line);
void UnityAssertEqualStringLen(const char *expected, const char *actual, size_t len, const char *msg, int line);
void UnityAssertEqualMemory(const void *expected, const void *actual, size_t len, const char *msg, int line);
void UnityAssertIntArray(const void *expected, const void *actual, size_t elem_size, size_t count,
                         int is_unsigned, const char *msg, int line);
void UnityAssertDoubleWithin(double delta, double expected, double actual, const char *msg, int line);

struct UnityState {
    const char *file;
    const char *current_test;
    int current_line;
    int tests;
    int failures;
    int ignored;
    int current_failed;
    int current_ignored;
    jmp_buf abort_frame;
};
extern struct UnityState Unity;

#define UNITY_CMP_GT 0
#define UNITY_CMP_LT 1
#define UNITY_CMP_GE 2
#define UNITY_CMP_LE 3

#define UNITY_BEGIN() UnityBegin(__FILE__)
#define UNITY_END() UnityEnd()
#define RUN_TEST(func) UnityDefaultTestRun(func, #func, __LINE__)

#define TEST_PASS() longjmp(Unity.abort_frame, 1)
#define TEST_FAIL_MESSAGE(msg) UnityFail((msg), __LINE__)
#define TEST_FAIL() UnityFail(NULL, __LINE__)
#define TEST_IGNORE_MESSAGE(msg) UnityIgnore((msg), __LINE__)
#define TEST_IGNORE() UnityIgnore(NULL, __LINE__)
#define TEST_MESSAGE(msg) UnityMessage((msg), __LINE__)

#define TEST_ASSERT_MESSAGE(c, msg) UnityAssertBool(!!(c), #c, (msg), __LINE__)
#define TEST_ASSERT(c) TEST_ASSERT_MESSAGE(c, NULL)
#define TEST_ASSERT_TRUE_MESSAGE(c, msg) UnityAssertBool(!!(c), #c " is true", (msg), __LINE__)
#define TEST_ASSERT_TRUE(c) TEST_ASSERT_TRUE_MESSAGE(c, NULL)
#define TEST_ASSERT_FALSE_MESSAGE(c, msg) UnityAssertBool(!(c), #c " is false", (msg), __LINE__)
#define TEST_ASSERT_FALSE(c) TEST_ASSERT_FALSE_MESSAGE(c, NULL)
#define TEST_ASSERT_UNLESS(c) TEST_ASSERT_FALSE(c)
#define TEST_ASSERT_NULL_MESSAGE(p, msg) UnityAssertBool((p) == NULL, #p " is NULL", (msg), __LINE__)
#define TEST_ASSERT_NULL(p) TEST_ASSERT_NULL_MESSAGE(p, NULL)
#define TEST_ASSERT_NOT_NULL_MESSAGE(p, msg) UnityAssertBool((p) != NULL, #p " is not NULL", (msg), __LINE__)
#define TEST_ASSERT_NOT_NULL(p) TEST_ASSERT_NOT_NULL_MESSAGE(p, NULL)
#define TEST_ASSERT_EMPTY(s) UnityAssertBool((s)[0] == 0, #s " is empty", NULL, __LINE__)
#define TEST_ASSERT_NOT_EMPTY(s) UnityAssertBool((s)[0] != 0, #s " is not empty", NULL, __LINE__)

#define TEST_ASSERT_EQUAL_INT_MESSAGE(e, a, msg) UnityAssertEqualInt((intmax_t)(e), (intmax_t)(a), (msg), __LINE__)
#define TEST_ASSERT_EQUAL_INT(e, a) TEST_ASSERT_EQUAL_INT_MESSAGE(e, a, NULL)
#define TEST_ASSERT_EQUAL_INT8(e, a) UnityAssertEqualInt((int8_t)(e), (int8_t)(a), NULL, __LINE__)
#define TEST_ASSERT_EQUAL_INT16(e, a) UnityAssertEqualInt((int16_t)(e), (int16_t)(a), NULL, __LINE__)
#define TEST_ASSERT_EQUAL_INT32(e, a) UnityAssertEqualInt((int32_t)(e), (int32_t)(a), NULL, __LINE__)
#define TEST_ASSERT_EQUAL_INT64(e, a) UnityAssertEqualInt((int64_t)(e), (int64_t)(a), NULL, __LINE__)
#define TEST_ASSERT_EQUAL_MESSAGE(e, a, msg) TEST_ASSERT_EQUAL_INT_MESSAGE(e, a, msg)
#define TEST_ASSERT_EQUAL(e, a) TEST_ASSERT_EQUAL_INT(e, a)
#define TEST_ASSERT_EQUAL_CHAR(e, a) UnityAssertEqualInt((char)(e), (char)(a), NULL, __LINE__)
#define TEST_ASSERT_NOT_EQUAL_MESSAGE(e, a, msg) UnityAssertNotEqualInt((intmax_t)(e), (intmax_t)(a), (msg), __LINE__)
#define TEST_ASSERT_NOT_EQUAL(e, a) TEST_ASSERT_NOT_EQUAL_MESSAGE(e, a, NULL)
#define TEST_ASSERT_NOT_EQUAL_INT(e, a) TEST_ASSERT_NOT_EQUAL(e, a)

#define TEST_ASSERT_EQUAL_UINT_MESSAGE(e, a, msg) UnityAssertEqualUInt((uintmax_t)(e), (uintmax_t)(a), 0, (msg), __LINE__)
#define TEST_ASSERT_EQUAL_UINT(e, a) TEST_ASSERT_EQUAL_UINT_MESSAGE(e, a, NULL)
#define TEST_ASSERT_EQUAL_UINT8(e, a) UnityAssertEqualUInt((uint8_t)(e), (uint8_t)(a), 0, NULL, __LINE__)
#define TEST_ASSERT_EQUAL_UINT16(e, a) UnityAssertEqualUInt((uint16_t)(e), (uint16_t)(a), 0, NULL, __LINE__)
#define TEST_ASSERT_EQUAL_UINT32(e, a) UnityAssertEqualUInt((uint32_t)(e), (uint32_t)(a), 0, NULL, __LINE__)
#define TEST_ASSERT_EQUAL_UINT64(e, a) UnityAssertEqualUInt((uint64_t)(e), (uint64_t)(a), 0, NULL, __LINE__)
#define TEST_ASSERT_EQUAL_size_t(e, a) UnityAssertEqualUInt((size_t)(e), (size_t)(a), 0, NULL, __LINE__)
#define TEST_ASSERT_EQUAL_HEX(e, a) UnityAssertEqualUInt((uintmax_t)(e), (uintmax_t)(a), 1, NULL, __LINE__)
#define TEST_ASSERT_EQUAL_HEX8(e, a) UnityAssertEqualUInt((uint8_t)(e), (uint8_t)(a), 1, NULL, __LINE__)
#define TEST_ASSERT_EQUAL_HEX16(e, a) UnityAssertEqualUInt((uint16_t)(e), (uint16_t)(a), 1, NULL, __LINE__)
#define TEST_ASSERT_EQUAL_HEX32(e, a) UnityAssertEqualUInt((uint32_t)(e), (uint32_t)(a), 1, NULL, __LINE__)
#define TEST_ASSERT_EQUAL_HEX64(e, a) UnityAssertEqualUInt((uint64_t)(e), (uint64_t)(a), 1, NULL, __LINE__)

#define TEST_ASSERT_GREATER_THAN(t, a) UnityAssertCompareInt((intmax_t)(t), (intmax_t)(a), UNITY_CMP_GT, NULL, __LINE__)
#define TEST_ASSERT_GREATER_THAN_INT(t, a) TEST_ASSERT_GREATER_THAN(t, a)
#define TEST_ASSERT_LESS_THAN(t, a) UnityAssertCompareInt((intmax_t)(t), (intmax_t)(a), UNITY_CMP_LT, NULL, __LINE__)
#define TEST_ASSERT_LESS_THAN_INT(t, a) TEST_ASSERT_LESS_THAN(t, a)
#define TEST_ASSERT_GREATER_OR_EQUAL(t, a) UnityAssertCompareInt((intmax_t)(t), (intmax_t)(a), UNITY_CMP_GE, NULL, __LINE__)
#define TEST_ASSERT_GREATER_OR_EQUAL_INT(t, a) TEST_ASSERT_GREATER_OR_EQUAL(t, a)
#define TEST_ASSERT_LESS_OR_EQUAL(t, a) UnityAssertCompareInt((intmax_t)(t), (intmax_t)(a), UNITY_CMP_LE, NULL, __LINE__)
#define TEST_ASSERT_LESS_OR_EQUAL_INT(t, a) TEST_ASSERT_LESS_OR_EQUAL(t, a)
#define TEST_ASSERT_GREATER_THAN_UINT(t, a) UnityAssertCompareUInt((uintmax_t)(t), (uintmax_t)(a), UNITY_CMP_GT, NULL, __LINE__)
#define TEST_ASSERT_LESS_THAN_UINT(t, a) UnityAssertCompareUInt((uintmax_t)(t), (uintmax_t)(a), UNITY_CMP_LT, NULL, __LINE__)
#define TEST_ASSERT_INT_WITHIN(d, e, a) \
    UnityAssertBool(((intmax_t)(a) - (intmax_t)(e) <= (intmax_t)(d)) && ((intmax_t)(e) - (intmax_t)(a) <= (intmax_t)(d)), \
                    #a " within " #d " of " #e, NULL, __LINE__)

#define TEST_ASSERT_EQUAL_PTR_MESSAGE(e, a, msg) UnityAssertEqualPtr((const void *)(e), (const void *)(a), (msg), __LINE__)
#define TEST_ASSERT_EQUAL_PTR(e, a) TEST_ASSERT_EQUAL_PTR_MESSAGE(e, a, NULL)
#define TEST_ASSERT_EQUAL_STRING_MESSAGE(e, a, msg) UnityAssertEqualString((e), (a), (msg), __LINE__)
#define TEST_ASSERT_EQUAL_STRING(e, a) TEST_ASSERT_EQUAL_STRING_MESSAGE(e, a, NULL)
#define TEST_ASSERT_EQUAL_STRING_LEN(e, a, n) UnityAssertEqualStringLen((e), (a), (n), NULL, __LINE__)
#define TEST_ASSERT_EQUAL_MEMORY(e, a, n) UnityAssertEqualMemory((e), (a), (n), NULL, __LINE__)
#define TEST_ASSERT_EQUAL_INT_ARRAY(e, a, n) UnityAssertIntArray((e), (a), sizeof(int), (n), 0, NULL, __LINE__)
#define TEST_ASSERT_EQUAL_UINT8_ARRAY(e, a, n) UnityAssertIntArray((e), (a), 1, (n), 1, NULL, __LINE__)
#define TEST_ASSERT_EQUAL_CHAR_ARRAY(e, a, n) UnityAssertIntArray((e), (a), 1, (n), 0, NULL, __LINE__)

#define TEST_ASSERT_DOUBLE_WITHIN(d, e, a) UnityAssertDoubleWithin((double)(d), (double)(e), (double)(a), NULL, __LINE__)
#define TEST_ASSERT_FLOAT_WITHIN(d, e, a) TEST_ASSERT_DOUBLE_WITHIN(d, e, a)
#define TEST_ASSERT_EQUAL_DOUBLE(e, a) TEST_ASSERT_DOUBLE_WITHIN(1e-12 * ((e) < 0 ? -(e) : (e)) + 1e-12, e, a)
#define TEST_ASSERT_EQUAL_FLOAT(e, a) TEST_ASSERT_DOUBLE_WITHIN(1e-5 * ((e) < 0 ? -(e) : (e)) + 1e-6, e, a)

#ifdef __cplusplus
}
#endif

#endif /* UNITY_FRAMEWORK_H */
